#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "overopt/labeling.hpp"
#include "overopt/proxy_rm.hpp"
#include "overopt/rl_opt.hpp"
#include "overopt/trace.hpp"
#include "overopt/world.hpp"

namespace overopt::pipeline {

/// 30 log-spaced integers from 1 to 60000, deduplicated.
std::vector<std::int64_t> default_n_grid();

struct SweepConfig {
  std::vector<int> capacities;
  std::vector<std::size_t> data_sizes;  // comparisons generated (train + holdout)
  std::vector<std::uint64_t> seeds;
  bool run_bon = true;
  bool run_rl = false;
  std::vector<double> lambdas{0.0};
  double holdout_fraction = 0.1;
  labeling::LabelMode label_mode = labeling::LabelMode::hard;
  double policy_temperature = 1.0;
  proxy::TrainConfig train;
  /// Unset: the world seed.
  std::optional<std::uint64_t> mask_seed;
  std::vector<std::int64_t> n_grid = default_n_grid();
  std::int64_t pool_size = 0;
  rl::RlConfig rl;

  nlohmann::json to_json() const;
  /// Throws ConfigError naming the field; empty axes are rejected.
  static SweepConfig from_json(const nlohmann::json& doc);
};

/// One trained proxy RM: (capacity, data size, seed).
struct RmKey {
  int capacity = 0;
  std::size_t data_size = 0;
  std::uint64_t seed = 0;
  std::string id() const;
};

/// One optimization run against one proxy RM.
struct Cell {
  RmKey rm;
  Method method = Method::bon;
  double lambda = 0.0;
  std::string id() const;
};

std::vector<RmKey> rm_keys(const SweepConfig& config);
std::vector<Cell> cells(const SweepConfig& config);

/// Seed of a derived random stream (dataset, BoN pool) for one sweep seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

/// FNV-1a over the canonical JSON of the world config and sweep config.
std::string config_hash(const WorldConfig& world, const SweepConfig& sweep);

/// Proxy RM as trained, recalibrated and recentered for a sweep.
struct TrainedProxy {
  RewardModel rm;
  double validation_loss = 0.0;
  double accuracy = 0.0;
  double soft_label_loss_before = 0.0;
  double soft_label_loss_after = 0.0;
};

TrainedProxy train_for_sweep(const World& world, const RewardModel& gold_rm,
                             const Policy& initial, const SweepConfig& config, const RmKey& key);

struct SweepOptions {
  std::filesystem::path out_dir;
  int threads = 1;
  bool force = false;
};

struct SweepOutcome {
  int completed = 0;
  int skipped = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // (cell id, message)
  int failure_exit_code = 0;
};

/// Runs every cell, writing
///   traces/<cell>.csv, fits/<cell>.json, rms/<rm>.json,
///   summary.csv (one row per cell), summary_mean.csv (seed-averaged),
///   sweep.json (manifest).
/// Cells whose trace and fit files already exist are skipped unless `force`.
/// A failing cell does not stop the others.
SweepOutcome run_sweep(const World& world, const SweepConfig& config, const SweepOptions& options);

/// Seed-averaged trace for one axis point; traces must share their grid.
OptimizationTrace average_traces(const std::vector<OptimizationTrace>& traces);

/// Fit JSON for a trace: form fit, peak (if any), extra diagnostics.
nlohmann::json fit_summary(const OptimizationTrace& trace);

/// Gold score at n = 1000 (interpolated in d when 1000 is off-grid).
std::optional<double> gold_at_n(const OptimizationTrace& trace, std::int64_t n);

/// Emits fig_gold_vs_d.tsv, fig_proxy_vs_gold.tsv, fig_coeff_vs_capacity.tsv,
/// and, when the sweep has those axes, fig_gold_vs_data.tsv and
/// fig_kl_penalty.tsv. Throws IncompleteInputError listing missing cells.
void write_report(const std::filesystem::path& out_dir);

}  // namespace overopt::pipeline

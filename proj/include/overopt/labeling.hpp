#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "overopt/world.hpp"

namespace overopt::labeling {

struct Comparison {
  int context = 0;
  int outcome_a = 0;
  int outcome_b = 0;
  bool a_preferred = false;
  double soft_label = 0.5;  // P(a preferred) under the gold Bradley-Terry link
};

enum class LabelMode { hard, sampled };

struct ComparisonDataset {
  std::vector<Comparison> records;
  /// Records [0, train_count) are train, the rest holdout.
  std::size_t train_count = 0;
  double holdout_fraction = 0.0;
  std::uint64_t seed = 0;
  LabelMode mode = LabelMode::hard;

  std::span<const Comparison> train() const { return {records.data(), train_count}; }
  std::span<const Comparison> holdout() const {
    return {records.data() + train_count, records.size() - train_count};
  }
};

inline constexpr int kMaxRedraws = 1000;

/// Draws `count` pairs (context uniform, both outcomes independently from
/// `policy`), redrawing pairs whose gold scores are exactly equal. In hard
/// mode the label names the higher-gold outcome; in sampled mode outcome a
/// wins with probability soft_label. Record i depends only on (seed, i's
/// position in the stream), so a smaller count yields a prefix of a larger
/// one. Throws GenerationError after kMaxRedraws redraws for one record.
ComparisonDataset generate_comparisons(const World& world, const RewardModel& gold_rm,
                                       const Policy& policy, std::size_t count,
                                       double holdout_fraction, std::uint64_t seed,
                                       LabelMode mode = LabelMode::hard);

double sigmoid(double x);

/// sigmoid(gold(a) - gold(b)) clamped into the open interval (0, 1).
double soft_label(const World& world, const RewardModel& gold_rm, int context, int outcome_a,
                  int outcome_b);

/// CSV with header context_id,outcome_a,outcome_b,hard_label,soft_label,split.
void write_csv(std::ostream& out, const ComparisonDataset& dataset);
/// Throws ConfigError on malformed rows or a non-contiguous split.
ComparisonDataset read_csv(std::istream& in);

}  // namespace overopt::labeling

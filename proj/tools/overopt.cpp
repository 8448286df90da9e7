#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "overopt/error.hpp"
#include "overopt/io.hpp"
#include "overopt/labeling.hpp"
#include "overopt/pipeline.hpp"
#include "overopt/proxy_rm.hpp"
#include "overopt/scaling_fit.hpp"
#include "overopt/world.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace overopt;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool force = false;
  std::string out;
};

json parse_json_file(const std::string& path) {
  const std::string text = io::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
}

/// A world file, or a world config that is built on the fly.
World load_world(const std::string& path, const std::optional<std::uint64_t>& seed) {
  json doc = parse_json_file(path);
  if (doc.is_object() && doc.value("format", "") == "overopt-world") {
    if (seed) throw UsageError("--seed cannot override the seed of a built world file");
    return world_from_json(doc);
  }
  if (seed && doc.is_object()) doc["seed"] = *seed;
  return build_world(WorldConfig::from_json(doc));
}

json fit_json(const fit::FunctionalFit& f) {
  json out = {{"form", fit::to_string(f.form)}, {"alpha", f.alpha},       {"beta", f.beta},
              {"rmse", f.rmse},                 {"d_min", f.d_min},       {"d_max", f.d_max},
              {"point_count", f.point_count},   {"weights_used", f.weights_used}};
  if (f.gamma) out["gamma"] = *f.gamma;
  try {
    const auto peak = fit::predict_peak(f);
    out["peak"] = {{"d_star", peak.d_star}, {"r_star", peak.r_star}};
  } catch (const DomainError&) {
    out["peak"] = nullptr;
  }
  return out;
}

int cmd_gen_world(const Globals& g, const std::string& config_path) {
  if (g.out.empty()) throw UsageError("gen-world: --out is required");
  json doc = parse_json_file(config_path);
  if (g.seed && doc.is_object()) doc["seed"] = *g.seed;
  const World world = build_world(WorldConfig::from_json(doc));
  io::write_file(g.out, world_to_json(world).dump() + "\n");
  std::cout << "world C=" << world.contexts() << " M=" << world.outcomes()
            << " F=" << world.feature_count() << " seed=" << world.seed() << " -> " << g.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string world;
  std::string sweep_config;
  int capacity = 4;
  std::size_t data_size = 8000;
  std::string comparisons_out;
};

int cmd_train_rm(const Globals& g, const TrainArgs& a) {
  if (g.out.empty()) throw UsageError("train-rm: --out is required");
  const World world = load_world(a.world, std::nullopt);
  pipeline::SweepConfig config;
  if (!a.sweep_config.empty()) config = pipeline::SweepConfig::from_json(parse_json_file(a.sweep_config));
  const Policy initial = initial_policy(world, config.policy_temperature);
  const RewardModel gold = proxy::normalized_gold(world, initial);
  const pipeline::RmKey key{a.capacity, a.data_size, g.seed.value_or(0)};
  const auto trained = pipeline::train_for_sweep(world, gold, initial, config, key);
  io::write_file(g.out, reward_model_to_json(trained.rm).dump(2) + "\n");
  if (!a.comparisons_out.empty()) {
    const auto ds = labeling::generate_comparisons(
        world, gold, initial, a.data_size, config.holdout_fraction,
        pipeline::derive_seed(key.seed, "comparisons"), config.label_mode);
    std::ostringstream csv;
    labeling::write_csv(csv, ds);
    io::write_file(a.comparisons_out, csv.str());
  }
  std::cout << "rm capacity=" << a.capacity << " data=" << a.data_size
            << " validation_loss=" << io::format_double(trained.validation_loss)
            << " accuracy=" << io::format_double(trained.accuracy)
            << " temperature=" << io::format_double(trained.rm.calibration_temperature) << " -> "
            << g.out << "\n";
  return 0;
}

int cmd_sweep(const Globals& g, const std::string& world_path, const std::string& config_path) {
  if (g.out.empty()) throw UsageError("sweep: --out is required");
  const World world = load_world(world_path, std::nullopt);
  auto config = pipeline::SweepConfig::from_json(parse_json_file(config_path));
  if (g.seed) config.seeds = {*g.seed};
  pipeline::SweepOptions options{g.out, g.threads, g.force};
  const auto outcome = pipeline::run_sweep(world, config, options);
  std::cout << "sweep: " << outcome.completed << " cells run, " << outcome.skipped
            << " skipped, " << outcome.failures.size() << " failed\n";
  if (!outcome.failures.empty()) {
    for (const auto& [id, msg] : outcome.failures) std::cerr << "failed " << id << ": " << msg << "\n";
    return outcome.failure_exit_code == 0 ? 4 : outcome.failure_exit_code;
  }
  return 0;
}

struct FitArgs {
  std::string trace;
  std::string form = "bon";
  std::optional<double> cutoff;
  std::optional<double> fixed_alpha;
};

int cmd_fit(const FitArgs& a) {
  const auto trace = trace_from_csv(io::read_file(a.trace));
  const fit::Form form = fit::form_from_string(a.form);
  std::vector<fit::Point> points;
  int dropped = 0;
  for (const auto& p : trace.points) {
    if (form != fit::Form::bon && p.d <= fit::kDefaultDFloor) {
      ++dropped;
      continue;
    }
    points.push_back({p.d, p.gold_score, 1.0});
  }
  if (dropped > 0)
    std::cerr << "warning: dropped " << dropped << " rows with d <= "
              << io::format_double(fit::kDefaultDFloor) << " for form " << a.form << "\n";
  if (a.fixed_alpha && form != fit::Form::rl)
    throw UsageError("--fixed-alpha applies to the rl form only");

  json out;
  if (a.cutoff) {
    const auto ex = fit::extrapolation_check(points, *a.cutoff, form);
    out = fit_json(ex.fit);
    out["cutoff_d"] = *a.cutoff;
    out["held_out_rmse"] = ex.held_out_rmse;
    out["held_out_count"] = ex.held_out_count;
    out["held_out_ratio"] = ex.fit.rmse > 0.0 ? json(ex.held_out_rmse / ex.fit.rmse) : json(nullptr);
  } else if (a.fixed_alpha) {
    fit::RlOptions options;
    options.fixed_alpha = *a.fixed_alpha;
    out = fit_json(fit::fit_rl(points, options));
  } else if (form == fit::Form::rl_log1p || form == fit::Form::rl_power) {
    const auto alt = fit::fit_alt_rl_forms(points, form);
    out = fit_json(alt.best);
    json cands = json::object();
    for (const auto& [f, rmse] : alt.candidate_rmse) cands[std::string(fit::to_string(f))] = rmse;
    out["candidate_rmse"] = cands;
  } else {
    out = fit_json(fit::fit_form(points, form));
  }
  out["dropped_rows"] = dropped;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_report(const Globals& g, const std::string& dir) {
  const std::string target = dir.empty() ? g.out : dir;
  if (target.empty()) throw UsageError("report: give the sweep directory");
  pipeline::write_report(target);
  std::cout << "report written to " << target << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward-model overoptimization laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--force", g.force, "Recompute existing outputs");
  app.add_option("--out", g.out, "Output file or directory");

  std::string gen_config;
  auto* gen = app.add_subcommand("gen-world", "Build a world from a config and write it");
  gen->add_option("config", gen_config, "World config JSON")->required();

  TrainArgs train;
  auto* tr = app.add_subcommand("train-rm", "Train, recalibrate and recenter one proxy RM");
  tr->add_option("--world", train.world, "World file or world config")->required();
  tr->add_option("--capacity", train.capacity, "Visible feature count");
  tr->add_option("--data-size", train.data_size, "Comparisons to generate");
  tr->add_option("--sweep-config", train.sweep_config, "Sweep config supplying training settings");
  tr->add_option("--comparisons", train.comparisons_out, "Also write the comparison CSV here");

  std::string sweep_world, sweep_config;
  auto* sw = app.add_subcommand("sweep", "Run a capacity/data/lambda sweep");
  sw->add_option("--world", sweep_world, "World file or world config")->required();
  sw->add_option("--config", sweep_config, "Sweep config JSON")->required();

  FitArgs fit_args;
  auto* ft = app.add_subcommand("fit", "Fit a functional form to a trace CSV");
  ft->add_option("trace", fit_args.trace, "Trace CSV")->required();
  ft->add_option("--form", fit_args.form, "bon, rl, rl_log1p or rl_power");
  ft->add_option("--cutoff", fit_args.cutoff, "Fit on d <= cutoff, score on d > cutoff");
  ft->add_option("--fixed-alpha", fit_args.fixed_alpha, "Hold alpha fixed (rl form)");

  std::string report_dir;
  auto* rp = app.add_subcommand("report", "Write plot-data files for a completed sweep");
  rp->add_option("dir", report_dir, "Sweep output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_world(g, gen_config);
    if (*tr) return cmd_train_rm(g, train);
    if (*sw) return cmd_sweep(g, sweep_world, sweep_config);
    if (*ft) return cmd_fit(fit_args);
    if (*rp) return cmd_report(g, report_dir);
  } catch (const overopt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "overopt/error.hpp"
#include "overopt/io.hpp"
#include "overopt/pipeline.hpp"

using namespace overopt;
using namespace overopt::pipeline;
namespace fs = std::filesystem;

namespace {

WorldConfig tiny_world() {
  WorldConfig cfg = testing_helpers::small_config(4, 64, 8, 3);
  cfg.spurious = SpuriousSpec{};
  return cfg;
}

SweepConfig tiny_sweep() {
  SweepConfig s;
  s.capacities = {2, 4};
  s.data_sizes = {300};
  s.seeds = {0, 1};
  s.run_bon = true;
  s.run_rl = true;
  s.n_grid = {1, 2, 4, 8, 16, 32, 64, 128};
  s.rl.steps = 60;
  s.rl.eta = 0.2;
  return s;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  return files;
}

}  // namespace

TEST_CASE("default n grid") {
  const auto g = default_n_grid();
  CHECK(g.front() == 1);
  CHECK(g.back() == 60000);
  CHECK(g.size() <= 30);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
}

TEST_CASE("sweep config parsing") {
  const SweepConfig s = tiny_sweep();
  const SweepConfig back = SweepConfig::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  auto doc = s.to_json();
  doc["capacities"] = nlohmann::json::array();
  CHECK_THROWS_AS(SweepConfig::from_json(doc), ConfigError);
  doc = s.to_json();
  doc["bogus"] = 1;
  CHECK_THROWS_AS(SweepConfig::from_json(doc), ConfigError);
  CHECK(cells(s).size() == 8);
  CHECK(rm_keys(s).size() == 4);
  CHECK(RmKey{4, 8000, 0}.id() == "cap4_data8000_seed0");
  CHECK(derive_seed(0, "comparisons") != derive_seed(0, "bon-pool"));
  CHECK(derive_seed(0, "comparisons") != derive_seed(1, "comparisons"));
}

TEST_CASE("sweep outputs are thread-count independent and resumable") {
  const World w = build_world(tiny_world());
  const auto d1 = testing_helpers::scratch_dir("sweep1");
  const auto d2 = testing_helpers::scratch_dir("sweep2");
  const auto a = run_sweep(w, tiny_sweep(), {d1, 1, false});
  const auto b = run_sweep(w, tiny_sweep(), {d2, 3, false});
  CHECK(a.failures.empty());
  CHECK(a.completed == 8);
  CHECK(b.completed == 8);
  write_report(d1);
  write_report(d2);
  const auto s1 = snapshot(d1), s2 = snapshot(d2);
  CHECK(s1 == s2);
  for (const char* f : {"fig_gold_vs_d.tsv", "fig_proxy_vs_gold.tsv", "fig_coeff_vs_capacity.tsv",
                        "summary.csv", "sweep.json"})
    CHECK(s1.count(f) == 1);

  const std::string hash = config_hash(tiny_world(), tiny_sweep());
  const auto trace = s1.at("traces/cap2_data300_seed0_bon.csv");
  CHECK(trace.find(hash) != std::string::npos);
  const auto parsed = trace_from_csv(trace);
  CHECK(parsed.points.size() == 8);

  const auto gold_vs_d = io::parse_table(s1.at("fig_gold_vs_d.tsv"), '\t');
  CHECK(gold_vs_d.header.size() >= 2);

  const auto again = run_sweep(w, tiny_sweep(), {d1, 1, false});
  CHECK(again.skipped == 8);
  CHECK(again.completed == 0);
  write_report(d1);
  CHECK(snapshot(d1) == s1);

  auto other = tiny_sweep();
  other.seeds = {5};
  CHECK_THROWS_AS(run_sweep(w, other, {d1, 1, false}), UsageError);
}

TEST_CASE("report on an incomplete sweep") {
  const World w = build_world(tiny_world());
  const auto dir = testing_helpers::scratch_dir("incomplete");
  auto s = tiny_sweep();
  s.run_rl = false;
  run_sweep(w, s, {dir, 1, false});
  fs::remove(dir / "traces" / "cap4_data300_seed1_bon.csv");
  try {
    write_report(dir);
    FAIL("expected IncompleteInputError");
  } catch (const IncompleteInputError& e) {
    CHECK(std::string(e.what()).find("cap4_data300_seed1_bon") != std::string::npos);
    CHECK(e.exit_code() == 3);
  }
}

TEST_CASE("fit summary and gold at n") {
  OptimizationTrace t;
  t.method = Method::bon;
  for (std::int64_t n : {1, 10, 100, 1000, 10000}) {
    TracePoint p;
    p.step_or_n = n;
    p.kl_nats = std::log(static_cast<double>(n)) - (n - 1.0) / n;
    p.d = std::sqrt(p.kl_nats);
    p.gold_score = p.d * (1.0 - 0.3 * p.d);
    p.proxy_score = p.d;
    t.points.push_back(p);
  }
  const auto j = fit_summary(t);
  CHECK(j["alpha"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(j["beta"].get<double>() == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(gold_at_n(t, 1000).value() == t.points[3].gold_score);
  CHECK(gold_at_n(t, 100000) == std::nullopt);
  const auto avg = average_traces({t, t});
  CHECK(avg.points[2].gold_score == t.points[2].gold_score);
}

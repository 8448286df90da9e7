#include "overopt/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <istream>
#include <ostream>
#include <string>

#include "overopt/error.hpp"
#include "overopt/io.hpp"
#include "overopt/random.hpp"

namespace overopt::labeling {
namespace {

constexpr double kOpenUpper = 1.0 - 0x1.0p-53;
constexpr double kOpenLower = 0x1.0p-1022;

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double soft_label(const World& world, const RewardModel& gold_rm, int context, int outcome_a,
                  int outcome_b) {
  const double delta = gold_score(world, gold_rm, context, outcome_a) -
                       gold_score(world, gold_rm, context, outcome_b);
  return std::clamp(sigmoid(delta), kOpenLower, kOpenUpper);
}

ComparisonDataset generate_comparisons(const World& world, const RewardModel& gold_rm,
                                       const Policy& policy, std::size_t count,
                                       double holdout_fraction, std::uint64_t seed,
                                       LabelMode mode) {
  if (count < 1) throw UsageError("generate_comparisons: count must be >= 1");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw DomainError("generate_comparisons: holdout_fraction must be in [0, 1)");
  if (policy.contexts() != world.contexts() || policy.outcomes() != world.outcomes())
    throw DomainError("generate_comparisons: policy shape does not match world");
  if (!gold_rm.normalized) throw UsageError("generate_comparisons: gold RM is not normalized");

  const std::vector<double> gold = score_table(world, gold_rm);
  const OutcomeSampler sampler(policy);
  Rng rng = Rng::stream(seed, 0);

  ComparisonDataset ds;
  ds.seed = seed;
  ds.mode = mode;
  ds.holdout_fraction = holdout_fraction;
  ds.records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Comparison r;
    int tries = 0;
    while (true) {
      r.context = static_cast<int>(rng.below(static_cast<std::uint64_t>(world.contexts())));
      r.outcome_a = sampler.draw(r.context, rng);
      r.outcome_b = sampler.draw(r.context, rng);
      if (gold[world.index(r.context, r.outcome_a)] != gold[world.index(r.context, r.outcome_b)])
        break;
      if (++tries >= kMaxRedraws) {
        throw GenerationError("generate_comparisons: record " + std::to_string(i) +
                              " still tied after " + std::to_string(kMaxRedraws) + " redraws");
      }
    }
    const double delta =
        gold[world.index(r.context, r.outcome_a)] - gold[world.index(r.context, r.outcome_b)];
    r.soft_label = std::clamp(sigmoid(delta), kOpenLower, kOpenUpper);
    r.a_preferred = mode == LabelMode::hard ? delta > 0.0 : rng.uniform() < r.soft_label;
    ds.records.push_back(r);
  }
  ds.train_count = static_cast<std::size_t>(
      std::llround(static_cast<double>(count) * (1.0 - holdout_fraction)));
  return ds;
}

void write_csv(std::ostream& out, const ComparisonDataset& dataset) {
  out << "context_id,outcome_a,outcome_b,hard_label,soft_label,split\n";
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    out << r.context << ',' << r.outcome_a << ',' << r.outcome_b << ','
        << (r.a_preferred ? 'a' : 'b') << ',' << io::format_double(r.soft_label) << ','
        << (i < dataset.train_count ? "train" : "holdout") << '\n';
  }
}

ComparisonDataset read_csv(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const io::Table table = io::parse_table(text, ',');
  static const char* const kColumns[] = {"context_id", "outcome_a",  "outcome_b",
                                         "hard_label", "soft_label", "split"};
  int col[6];
  for (int k = 0; k < 6; ++k) {
    col[k] = table.column(kColumns[k]);
    if (col[k] < 0) throw ConfigError(kColumns[k], "missing column");
  }
  ComparisonDataset ds;
  bool in_holdout = false;
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size())
      throw ConfigError("row", "expected " + std::to_string(table.header.size()) + " fields");
    Comparison r;
    r.context = static_cast<int>(io::parse_int(row[static_cast<std::size_t>(col[0])], "context_id"));
    r.outcome_a = static_cast<int>(io::parse_int(row[static_cast<std::size_t>(col[1])], "outcome_a"));
    r.outcome_b = static_cast<int>(io::parse_int(row[static_cast<std::size_t>(col[2])], "outcome_b"));
    const std::string& label = row[static_cast<std::size_t>(col[3])];
    if (label != "a" && label != "b") throw ConfigError("hard_label", "must be a or b");
    r.a_preferred = label == "a";
    r.soft_label = io::parse_double(row[static_cast<std::size_t>(col[4])], "soft_label");
    const std::string& split = row[static_cast<std::size_t>(col[5])];
    if (split == "train") {
      if (in_holdout) throw ConfigError("split", "train rows must precede holdout rows");
      ++ds.train_count;
    } else if (split == "holdout") {
      in_holdout = true;
    } else {
      throw ConfigError("split", "must be train or holdout");
    }
    ds.records.push_back(r);
  }
  if (!ds.records.empty()) {
    ds.holdout_fraction =
        static_cast<double>(ds.records.size() - ds.train_count) / static_cast<double>(ds.records.size());
  }
  return ds;
}

}  // namespace overopt::labeling

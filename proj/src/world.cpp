#include "overopt/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "overopt/error.hpp"
#include "overopt/random.hpp"

namespace overopt {
namespace {

using nlohmann::json;

enum Stream : std::uint64_t { kFeatureStream = 1, kSpuriousStream = 2, kLogitStream = 3 };

template <typename T>
T get_field(const json& doc, const char* key, T fallback, bool required = false) {
  auto it = doc.find(key);
  if (it == doc.end()) {
    if (required) throw ConfigError(key, "missing required field");
    return fallback;
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key, "wrong type (" + std::string(it->type_name()) + ")");
  }
}

int core_count(const WorldConfig& config) {
  return config.features - (config.spurious ? config.spurious->count : 0);
}

}  // namespace

void WorldConfig::validate() const {
  if (contexts < 1) throw ConfigError("contexts", "must be >= 1");
  if (outcomes < 2) throw ConfigError("outcomes", "must be >= 2");
  if (features < 2) throw ConfigError("features", "must be >= 2");
  if (!(base_logit_scale >= 0.0) || !std::isfinite(base_logit_scale))
    throw ConfigError("base_logit_scale", "must be finite and >= 0");
  if (spurious) {
    if (spurious->count < 1 || spurious->count >= features)
      throw ConfigError("spurious_count", "must be in [1, features)");
    if (!(spurious->clip > 0.0)) throw ConfigError("spurious_clip", "must be > 0");
    if (!(spurious->noise >= 0.0)) throw ConfigError("spurious_noise", "must be >= 0");
    if (!(spurious->tail_scale >= 0.0)) throw ConfigError("spurious_tail_scale", "must be >= 0");
    if (!(spurious->tail_index >= 0.5) || !std::isfinite(spurious->tail_index))
      throw ConfigError("spurious_tail_index", "must be finite and >= 0.5");
  }
  if (gold_weights) {
    if (static_cast<int>(gold_weights->size()) != features)
      throw ConfigError("gold_weights", "length must equal features");
    double norm = 0.0;
    for (int f = 0; f < features; ++f) {
      const double w = (*gold_weights)[static_cast<std::size_t>(f)];
      if (!std::isfinite(w)) throw ConfigError("gold_weights", "must be finite");
      if (f >= core_count(*this) && w != 0.0)
        throw ConfigError("gold_weights", "spurious features must have zero gold weight");
      norm += w * w;
    }
    if (!(norm > 0.0)) throw ConfigError("gold_weights", "must not be all zero");
  }
}

json WorldConfig::to_json() const {
  json doc = {{"contexts", contexts},
              {"outcomes", outcomes},
              {"features", features},
              {"seed", seed},
              {"base_logit_scale", base_logit_scale}};
  if (gold_weights) doc["gold_weights"] = *gold_weights;
  if (spurious) {
    doc["spurious_count"] = spurious->count;
    doc["spurious_clip"] = spurious->clip;
    doc["spurious_noise"] = spurious->noise;
    doc["spurious_tail_scale"] = spurious->tail_scale;
    doc["spurious_tail_index"] = spurious->tail_index;
  }
  return doc;
}

WorldConfig WorldConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("<root>", "world config must be a JSON object");
  static const std::set<std::string> known = {
      "contexts",       "outcomes",           "features",
      "seed",           "base_logit_scale",   "gold_weights",
      "spurious_count", "spurious_clip",      "spurious_noise",
      "spurious_tail_scale", "spurious_tail_index"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw ConfigError(key, "unknown field");
  }
  WorldConfig config;
  config.contexts = get_field<int>(doc, "contexts", config.contexts);
  config.outcomes = get_field<int>(doc, "outcomes", config.outcomes);
  config.features = get_field<int>(doc, "features", config.features);
  config.seed = get_field<std::uint64_t>(doc, "seed", 0, /*required=*/true);
  config.base_logit_scale = get_field<double>(doc, "base_logit_scale", config.base_logit_scale);
  if (doc.contains("gold_weights"))
    config.gold_weights = get_field<std::vector<double>>(doc, "gold_weights", {});
  if (doc.contains("spurious_count")) {
    SpuriousSpec spec;
    spec.count = get_field<int>(doc, "spurious_count", spec.count);
    spec.clip = get_field<double>(doc, "spurious_clip", spec.clip);
    spec.noise = get_field<double>(doc, "spurious_noise", spec.noise);
    spec.tail_scale = get_field<double>(doc, "spurious_tail_scale", spec.tail_scale);
    spec.tail_index = get_field<double>(doc, "spurious_tail_index", spec.tail_index);
    config.spurious = spec;
  } else {
    for (const char* key : {"spurious_clip", "spurious_noise", "spurious_tail_scale",
                            "spurious_tail_index"}) {
      if (doc.contains(key)) throw ConfigError(key, "requires spurious_count");
    }
  }
  config.validate();
  return config;
}

std::vector<int> World::spurious_features() const {
  std::vector<int> out;
  for (int f = core_count(config_); f < feature_count(); ++f) out.push_back(f);
  return out;
}

std::vector<int> World::gold_support() const {
  std::vector<int> out;
  for (int f = 0; f < feature_count(); ++f) {
    if (gold_weights_[static_cast<std::size_t>(f)] != 0.0) out.push_back(f);
  }
  return out;
}

World build_world(const WorldConfig& config) {
  config.validate();
  World world;
  world.config_ = config;
  const int C = config.contexts;
  const int M = config.outcomes;
  const int F = config.features;
  const int core = core_count(config);

  if (config.gold_weights) {
    world.gold_weights_ = *config.gold_weights;
  } else {
    world.gold_weights_.assign(static_cast<std::size_t>(F), 0.0);
    std::fill_n(world.gold_weights_.begin(), core, 1.0);
  }
  const double gold_norm = std::sqrt(std::inner_product(
      world.gold_weights_.begin(), world.gold_weights_.end(), world.gold_weights_.begin(), 0.0));

  const std::size_t cells = static_cast<std::size_t>(C) * static_cast<std::size_t>(M);
  world.features_.assign(cells * static_cast<std::size_t>(F), 0.0);
  Rng feature_rng = Rng::stream(config.seed, kFeatureStream);
  Rng spurious_rng = Rng::stream(config.seed, kSpuriousStream);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    double* x = world.features_.data() + cell * static_cast<std::size_t>(F);
    for (int f = 0; f < core; ++f) x[f] = feature_rng.normal();
    if (!config.spurious) continue;
    const SpuriousSpec& spec = *config.spurious;
    // Gold signal standardized to unit variance under i.i.d. N(0,1) features.
    const double signal =
        std::inner_product(x, x + core, world.gold_weights_.begin(), 0.0) / gold_norm;
    for (int f = core; f < F; ++f) {
      const double noisy = signal + spec.noise * spurious_rng.normal();
      const double sign = spurious_rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double tail = sign * (std::pow(spurious_rng.uniform_open(), -1.0 / spec.tail_index) - 1.0);
      x[f] = std::clamp(noisy, -spec.clip, spec.clip) + spec.tail_scale * tail;
    }
  }

  world.base_logits_.assign(cells, 0.0);
  if (config.base_logit_scale > 0.0) {
    Rng logit_rng = Rng::stream(config.seed, kLogitStream);
    for (auto& logit : world.base_logits_) logit = config.base_logit_scale * logit_rng.normal();
  }
  return world;
}

json world_to_json(const World& world) {
  json features = json::array();
  const auto& table = world.feature_table();
  const auto F = static_cast<std::size_t>(world.feature_count());
  for (int c = 0; c < world.contexts(); ++c) {
    json rows = json::array();
    for (int m = 0; m < world.outcomes(); ++m) {
      const std::size_t offset = world.index(c, m) * F;
      rows.push_back(std::vector<double>(table.begin() + static_cast<std::ptrdiff_t>(offset),
                                         table.begin() + static_cast<std::ptrdiff_t>(offset + F)));
    }
    features.push_back(std::move(rows));
  }
  json logits = json::array();
  for (int c = 0; c < world.contexts(); ++c) {
    auto row = world.base_logits(c);
    logits.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"format", "overopt-world"},
          {"version", kWorldFormatVersion},
          {"config", world.config().to_json()},
          {"gold_weights", world.gold_weights()},
          {"base_logits", std::move(logits)},
          {"features", std::move(features)}};
}

World world_from_json(const json& doc) {
  if (doc.value("format", "") != "overopt-world")
    throw ConfigError("format", "not a world file");
  if (doc.value("version", -1) != kWorldFormatVersion)
    throw ConfigError("version", "unsupported world file version");
  World world;
  world.config_ = WorldConfig::from_json(doc.at("config"));
  const auto C = static_cast<std::size_t>(world.contexts());
  const auto M = static_cast<std::size_t>(world.outcomes());
  const auto F = static_cast<std::size_t>(world.feature_count());
  world.gold_weights_ = doc.at("gold_weights").get<std::vector<double>>();
  if (world.gold_weights_.size() != F) throw ConfigError("gold_weights", "shape mismatch");

  const auto& logits = doc.at("base_logits");
  const auto& features = doc.at("features");
  if (logits.size() != C || features.size() != C)
    throw ConfigError("features", "context count mismatch");
  world.base_logits_.reserve(C * M);
  world.features_.reserve(C * M * F);
  for (std::size_t c = 0; c < C; ++c) {
    if (logits[c].size() != M || features[c].size() != M)
      throw ConfigError("features", "outcome count mismatch");
    for (const auto& v : logits[c]) world.base_logits_.push_back(v.get<double>());
    for (const auto& row : features[c]) {
      if (row.size() != F) throw ConfigError("features", "feature count mismatch");
      for (const auto& v : row) world.features_.push_back(v.get<double>());
    }
  }
  return world;
}

Policy initial_policy(const World& world, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw DomainError("initial_policy: temperature must be positive and finite");
  Policy policy(world.contexts(), world.outcomes(), temperature);
  for (int c = 0; c < world.contexts(); ++c) {
    auto logits = world.base_logits(c);
    auto probs = policy.row(c);
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t m = 0; m < probs.size(); ++m) {
      probs[m] = std::exp((logits[m] - top) / temperature);
      total += probs[m];
    }
    for (auto& p : probs) p /= total;
  }
  return policy;
}

double RewardModel::raw_score(std::span<const double> features) const {
  double total = bias;
  for (int f : feature_mask) total += weights[static_cast<std::size_t>(f)] * features[static_cast<std::size_t>(f)];
  return total;
}

RewardModel gold_model(const World& world) {
  RewardModel rm;
  rm.weights = world.gold_weights();
  rm.feature_mask.resize(static_cast<std::size_t>(world.feature_count()));
  std::iota(rm.feature_mask.begin(), rm.feature_mask.end(), 0);
  rm.training = {{"kind", "gold"}};
  return rm;
}

std::vector<double> score_table(const World& world, const RewardModel& rm) {
  std::vector<double> scores(static_cast<std::size_t>(world.contexts()) *
                             static_cast<std::size_t>(world.outcomes()));
  for (int c = 0; c < world.contexts(); ++c) {
    for (int m = 0; m < world.outcomes(); ++m) {
      scores[world.index(c, m)] = rm.score(world.features(c, m));
    }
  }
  return scores;
}

double gold_score(const World& world, const RewardModel& gold_rm, int context, int outcome) {
  if (!gold_rm.normalized)
    throw UsageError("gold_score: gold RM has not been normalized against the initial policy");
  if (context < 0 || context >= world.contexts() || outcome < 0 || outcome >= world.outcomes())
    throw UsageError("gold_score: (context, outcome) out of range");
  return gold_rm.score(world.features(context, outcome));
}

Moments policy_moments(const Policy& policy, std::span<const double> scores) {
  const auto M = static_cast<std::size_t>(policy.outcomes());
  double mean = 0.0;
  for (int c = 0; c < policy.contexts(); ++c) {
    auto probs = policy.row(c);
    const double* s = scores.data() + static_cast<std::size_t>(c) * M;
    double row = 0.0;
    for (std::size_t m = 0; m < M; ++m) row += probs[m] * s[m];
    mean += row;
  }
  mean /= policy.contexts();
  double variance = 0.0;
  for (int c = 0; c < policy.contexts(); ++c) {
    auto probs = policy.row(c);
    const double* s = scores.data() + static_cast<std::size_t>(c) * M;
    double row = 0.0;
    for (std::size_t m = 0; m < M; ++m) row += probs[m] * (s[m] - mean) * (s[m] - mean);
    variance += row;
  }
  return {mean, variance / policy.contexts()};
}

json reward_model_to_json(const RewardModel& rm) {
  return {{"format", "overopt-reward-model"},
          {"version", 1},
          {"weights", rm.weights},
          {"bias", rm.bias},
          {"mask", rm.feature_mask},
          {"calibration_temperature", rm.calibration_temperature},
          {"score_shift", rm.score_shift},
          {"score_scale", rm.score_scale},
          {"normalized", rm.normalized},
          {"training", rm.training}};
}

RewardModel reward_model_from_json(const json& doc) {
  if (doc.value("format", "") != "overopt-reward-model" || doc.value("version", -1) != 1)
    throw ConfigError("format", "not a version-1 reward model file");
  RewardModel rm;
  rm.weights = doc.at("weights").get<std::vector<double>>();
  rm.bias = doc.at("bias").get<double>();
  rm.feature_mask = doc.at("mask").get<std::vector<int>>();
  rm.calibration_temperature = doc.at("calibration_temperature").get<double>();
  rm.score_shift = doc.at("score_shift").get<double>();
  rm.score_scale = doc.at("score_scale").get<double>();
  rm.normalized = doc.value("normalized", false);
  rm.training = doc.value("training", json::object());
  for (int f : rm.feature_mask) {
    if (f < 0 || static_cast<std::size_t>(f) >= rm.weights.size())
      throw ConfigError("mask", "feature index out of range");
  }
  return rm;
}

}  // namespace overopt

namespace overopt {

OutcomeSampler::OutcomeSampler(const Policy& policy)
    : outcomes_(policy.outcomes()), cdf_(policy.table().size()) {
  for (int c = 0; c < policy.contexts(); ++c) {
    auto probs = policy.row(c);
    double* out = cdf_.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(outcomes_);
    double running = 0.0;
    for (int m = 0; m < outcomes_; ++m) {
      running += probs[static_cast<std::size_t>(m)];
      out[m] = running;
    }
    out[outcomes_ - 1] = 1.0;
  }
}

int OutcomeSampler::draw(int context, Rng& rng) const {
  const double* row = cdf_.data() + static_cast<std::size_t>(context) * static_cast<std::size_t>(outcomes_);
  const double u = rng.uniform();
  const double* hit = std::upper_bound(row, row + outcomes_, u);
  return static_cast<int>(std::min<std::ptrdiff_t>(hit - row, outcomes_ - 1));
}

}  // namespace overopt

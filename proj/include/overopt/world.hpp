#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace overopt {

/// Features that track gold on-distribution but whose extreme values are
/// gold-free. Each spurious feature is
///
///   clamp(g + noise * eps, -clip, clip) + tail_scale * s * (u^(-1/tail_index) - 1)
///
/// with g the standardized gold signal, eps a standard normal, s a fair sign
/// and u uniform on (0, 1], all independent. The excursion term is Pareto
/// with tail index `tail_index`. The clamped part carries the gold signal; every value beyond the
/// clip boundary comes from the heavy-tailed term, which is independent of
/// gold. Spurious features occupy the last `count` feature indices and get
/// zero gold weight.
struct SpuriousSpec {
  int count = 1;
  double clip = 1.0;
  double noise = 1.0;
  double tail_scale = 0.1;
  double tail_index = 2.0;
};

struct WorldConfig {
  int contexts = 32;
  int outcomes = 256;
  int features = 16;
  std::uint64_t seed = 0;
  /// Standard deviation of the per-(context, outcome) base logits of the
  /// initial policy. Zero gives a uniform initial policy.
  double base_logit_scale = 0.5;
  /// Explicit gold weights; when absent every non-spurious feature gets
  /// weight 1.
  std::optional<std::vector<double>> gold_weights;
  std::optional<SpuriousSpec> spurious;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  nlohmann::json to_json() const;
  /// Parses a flat key-value document. Throws ConfigError on missing or
  /// malformed fields ("seed" is required).
  static WorldConfig from_json(const nlohmann::json& doc);
};

/// Finite contexts x outcomes, each outcome a feature vector, plus the base
/// logits of the initial policy. Immutable after construction.
class World {
 public:
  World() = default;

  const WorldConfig& config() const { return config_; }
  int contexts() const { return config_.contexts; }
  int outcomes() const { return config_.outcomes; }
  int feature_count() const { return config_.features; }
  std::uint64_t seed() const { return config_.seed; }

  std::span<const double> features(int context, int outcome) const {
    return {features_.data() + index(context, outcome) * static_cast<std::size_t>(feature_count()),
            static_cast<std::size_t>(feature_count())};
  }
  std::span<const double> base_logits(int context) const {
    return {base_logits_.data() + index(context, 0), static_cast<std::size_t>(outcomes())};
  }
  const std::vector<double>& gold_weights() const { return gold_weights_; }
  /// Indices of the spurious features (empty without a spurious spec).
  std::vector<int> spurious_features() const;
  /// Indices with non-zero gold weight.
  std::vector<int> gold_support() const;

  std::size_t index(int context, int outcome) const {
    return static_cast<std::size_t>(context) * static_cast<std::size_t>(outcomes()) +
           static_cast<std::size_t>(outcome);
  }

  const std::vector<double>& feature_table() const { return features_; }
  const std::vector<double>& base_logit_table() const { return base_logits_; }

  friend World build_world(const WorldConfig& config);
  friend World world_from_json(const nlohmann::json& doc);

 private:
  WorldConfig config_;
  std::vector<double> features_;     // [context][outcome][feature]
  std::vector<double> base_logits_;  // [context][outcome]
  std::vector<double> gold_weights_;
};

/// Deterministic in the config (including its seed).
World build_world(const WorldConfig& config);

inline constexpr int kWorldFormatVersion = 1;
nlohmann::json world_to_json(const World& world);
/// Throws ConfigError on version mismatch or inconsistent shapes.
World world_from_json(const nlohmann::json& doc);

/// Per-context probabilities over outcomes.
class Policy {
 public:
  Policy() = default;
  Policy(int contexts, int outcomes, double temperature)
      : contexts_(contexts), outcomes_(outcomes), temperature_(temperature),
        probs_(static_cast<std::size_t>(contexts) * static_cast<std::size_t>(outcomes)) {}

  int contexts() const { return contexts_; }
  int outcomes() const { return outcomes_; }
  double temperature() const { return temperature_; }

  std::span<double> row(int context) {
    return {probs_.data() + static_cast<std::size_t>(context) * static_cast<std::size_t>(outcomes_),
            static_cast<std::size_t>(outcomes_)};
  }
  std::span<const double> row(int context) const {
    return {probs_.data() + static_cast<std::size_t>(context) * static_cast<std::size_t>(outcomes_),
            static_cast<std::size_t>(outcomes_)};
  }
  const std::vector<double>& table() const { return probs_; }

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  int contexts_ = 0;
  int outcomes_ = 0;
  double temperature_ = 1.0;
  std::vector<double> probs_;
};

/// Softmax of the world's base logits divided by `temperature`.
/// Throws DomainError for temperature <= 0.
Policy initial_policy(const World& world, double temperature);

/// Linear scorer over a subset of features.
///
/// score = score_scale * (weights . features + bias - score_shift). The
/// calibration temperature does not enter `score`; it divides score
/// differences when the model is read as a pairwise preference.
struct RewardModel {
  std::vector<double> weights;  // length F, zero outside the mask
  double bias = 0.0;
  std::vector<int> feature_mask;  // sorted feature indices
  double calibration_temperature = 1.0;
  double score_shift = 0.0;
  double score_scale = 1.0;
  /// Set by proxy::normalize; gold_score() refuses models without it.
  bool normalized = false;
  /// Training configuration and diagnostics, recorded verbatim in RM files.
  nlohmann::json training;

  double raw_score(std::span<const double> features) const;
  double score(std::span<const double> features) const {
    return score_scale * (raw_score(features) - score_shift);
  }
  /// Calibrated logit of "a preferred over b".
  double preference_logit(double score_a, double score_b) const {
    return (score_a - score_b) / calibration_temperature;
  }
};

/// The gold scorer: gold weights on every feature, unnormalized.
RewardModel gold_model(const World& world);

/// All scores of `rm`, laid out [context][outcome].
std::vector<double> score_table(const World& world, const RewardModel& rm);

/// Normalized gold score of one outcome. Throws UsageError when `gold_rm` has
/// not been normalized against the initial policy.
double gold_score(const World& world, const RewardModel& gold_rm, int context, int outcome);

/// Exact expectation and variance of `scores` ([context][outcome]) with
/// contexts uniform and outcomes drawn from `policy`.
struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};
Moments policy_moments(const Policy& policy, std::span<const double> scores);

nlohmann::json reward_model_to_json(const RewardModel& rm);
RewardModel reward_model_from_json(const nlohmann::json& doc);

}  // namespace overopt

namespace overopt {

class Rng;

/// Inverse-CDF sampler over each context's outcome distribution.
class OutcomeSampler {
 public:
  explicit OutcomeSampler(const Policy& policy);
  int draw(int context, Rng& rng) const;

 private:
  int outcomes_ = 0;
  std::vector<double> cdf_;  // [context][outcome], last entry per row forced to 1
};

}  // namespace overopt

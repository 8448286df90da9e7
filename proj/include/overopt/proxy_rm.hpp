#pragma once

#include <cstdint>
#include <vector>

#include "overopt/labeling.hpp"
#include "overopt/world.hpp"

namespace overopt::proxy {

struct TrainConfig {
  double l2 = 1e-4;
  double grad_tolerance = 1e-8;
  /// The iteration cap is epochs * steps_per_epoch full-batch steps.
  int epochs = 1;
  int steps_per_epoch = 2000;
  /// Seeds the feature permutation whose first `capacity` entries form the
  /// mask. The same mask seed gives nested masks across capacities.
  std::uint64_t mask_seed = 0;

  nlohmann::json to_json() const;
};

/// Seed-fixed random permutation of 0..F-1; independent of gold weights.
std::vector<int> feature_order(int features, std::uint64_t mask_seed);

/// Sorted first `capacity` entries of feature_order.
std::vector<int> feature_mask(int features, int capacity, std::uint64_t mask_seed);

/// Fits masked weights by full-batch gradient descent on the mean pairwise
/// cross-entropy plus l2 * |w|^2, with a fixed step size from the curvature
/// bound. Throws UsageError on an empty train split, DomainError on a bad
/// capacity, NumericalError (with iteration index) on a non-finite loss.
/// Convergence diagnostics land in rm.training.
RewardModel train_proxy(const labeling::ComparisonDataset& dataset, const World& world,
                        int capacity, const TrainConfig& config);

/// Mean cross-entropy of the calibrated preference logit against hard labels
/// on the holdout split. Throws UsageError when the holdout is empty.
double validation_loss(const RewardModel& rm, const World& world,
                       const labeling::ComparisonDataset& dataset);

/// Mean cross-entropy on the train split (same link).
double training_loss(const RewardModel& rm, const World& world,
                     const labeling::ComparisonDataset& dataset);

/// Mean cross-entropy of the calibrated preference logit against soft labels
/// on the holdout split.
double soft_label_loss(const RewardModel& rm, const World& world,
                       const labeling::ComparisonDataset& dataset);

/// Sets calibration_temperature to the minimizer over t > 0 of the holdout
/// soft-label cross-entropy of sigmoid(delta / t). The loss is convex in 1/t;
/// the root of its derivative is bracketed and refined to 1e-10 in t.
/// Throws NumericalError when every score difference is zero or the
/// optimum is not at a finite positive t.
RewardModel recalibrate(const RewardModel& rm, const World& world,
                        const labeling::ComparisonDataset& dataset);

/// Recenters so the exact initial-policy mean is zero; with `unit_variance`
/// also rescales to unit variance (otherwise score_scale is kept). Shift and
/// scale are computed from raw scores, so normalizing twice is a no-op.
/// Throws NumericalError on zero variance when unit_variance is requested.
RewardModel normalize(const RewardModel& rm, const World& world, const Policy& initial,
                      bool unit_variance);

/// Fraction of holdout pairs ranked in the hard-label direction; ties 0.5.
double accuracy(const RewardModel& rm, const World& world,
                const labeling::ComparisonDataset& dataset);

/// Gold RM normalized to mean 0 and variance 1 under `initial`.
RewardModel normalized_gold(const World& world, const Policy& initial);

}  // namespace overopt::proxy

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "overopt/trace.hpp"
#include "overopt/world.hpp"

namespace overopt::bon {

/// Analytic KL of best-of-n from the base policy: ln n - (n - 1) / n.
/// Throws DomainError for n < 1.
double kl_bon(std::int64_t n);

struct ScoredSample {
  double proxy = 0.0;
  double gold = 0.0;
  /// Secondary sort key for equal proxy scores.
  std::uint64_t tiebreak = 0;
};

struct BonEstimate {
  double expected_proxy = 0.0;
  double expected_gold = 0.0;
};

/// Largest pool the estimator accepts.
inline constexpr std::int64_t kMaxPool = 1'000'000;

/// Weight of the i-th smallest of N samples (1-based) being the best of a
/// uniformly random n-subset: C(i-1, n-1) / C(N, n). Returned for i = 1..N,
/// computed by the downward ratio recurrence from w_N = n / N.
std::vector<double> order_weights(std::int64_t pool, std::int64_t n);

/// Unbiased estimate of the expected proxy and gold score of the proxy-best
/// of n draws, from a pool of N >= n draws: the exact average over all
/// n-subsets of the pool. Sorts `samples` in place by (proxy, tiebreak).
BonEstimate unbiased_estimate(std::span<ScoredSample> samples, std::int64_t n);

/// Same estimate for samples already sorted ascending by (proxy, tiebreak).
BonEstimate unbiased_estimate_sorted(std::span<const ScoredSample> samples, std::int64_t n);

struct CurveConfig {
  std::int64_t pool_size = 0;  ///< 0 selects 4 * max(n_grid)
  std::vector<std::int64_t> n_grid;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Draws one pool of N outcomes per context from `policy`, scores it with both
/// RMs, and emits one point per n in the grid, averaged over contexts.
OptimizationTrace bon_curve(const World& world, const Policy& policy,
                            const RewardModel& proxy_rm, const RewardModel& gold_rm,
                            const CurveConfig& config);

/// Exact best-of-n law over a finite outcome set:
/// P(i) = F(i)^n - F(i-1)^n with F the base CDF in proxy order.
std::vector<double> exact_bon_distribution(std::span<const double> base_probs,
                                           std::span<const double> proxy_scores,
                                           std::int64_t n);

/// KL(p || q) for two distributions on the same finite set.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Fixed pseudo-random total order on outcomes used to break proxy ties.
std::uint64_t tiebreak_key(std::uint64_t seed, int context, int outcome);

}  // namespace overopt::bon

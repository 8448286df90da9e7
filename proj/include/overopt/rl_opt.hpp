#pragma once

#include <span>
#include <vector>

#include "overopt/trace.hpp"
#include "overopt/world.hpp"

namespace overopt::rl {

// Exact KL-tracked policy optimization on categorical policies. Each step is
// one mirror-ascent (exponentiated-gradient) update on the penalized
// objective E_pi[r] - lambda * KL(pi || pi_init):
//
//   pi'(x) ~ pi(x) * exp(eta * (r(x) - lambda * ln(pi(x) / pi_init(x))))
//
// All expectations are finite sums; there is no sampling.

/// One update. `proxy_scores` is laid out [context][outcome].
/// Throws DomainError on bad eta/lambda or a policy without full support,
/// NumericalError when the update overflows.
Policy rl_step(const Policy& policy, std::span<const double> proxy_scores,
               const Policy& initial, double eta, double lambda);

/// KL(pi || pi_init) averaged uniformly over contexts.
/// Throws DomainError when pi puts mass where pi_init has none.
double kl_from_init(const Policy& policy, const Policy& initial);

/// Total variation distance, maximized over contexts.
double max_total_variation(const Policy& a, const Policy& b);

struct RlConfig {
  int steps = 2000;
  double eta = 0.05;
  double lambda = 0.0;
  int record_every = 10;
};

struct RlResult {
  OptimizationTrace trace;
  Policy final_policy;
};

/// Iterates rl_step from `initial`, recording exact KL, proxy and gold
/// expectations at step 0, every `record_every` steps, and the last step.
/// With lambda = 0 it verifies that KL and the expected proxy score never
/// decrease by more than 1e-9 per step (NumericalError otherwise).
RlResult run_rl(const World& world, const RewardModel& proxy_rm, const RewardModel& gold_rm,
                const Policy& initial, const RlConfig& config);

/// Closed-form optimum of the penalized objective: pi* ~ pi_init exp(r / lambda).
Policy penalized_optimum(const Policy& initial, std::span<const double> proxy_scores,
                         double lambda);

/// One run per lambda, all from the same initial policy.
std::vector<OptimizationTrace> kl_penalty_frontier(const World& world,
                                                   const RewardModel& proxy_rm,
                                                   const RewardModel& gold_rm,
                                                   const Policy& initial,
                                                   std::span<const double> lambdas,
                                                   const RlConfig& base, int threads = 1);

/// Gold score linearly interpolated at `kl` along a trace whose KL is
/// non-decreasing. Returns nullopt when `kl` lies outside the trace's range.
std::optional<double> gold_at_kl(const OptimizationTrace& trace, double kl);

}  // namespace overopt::rl

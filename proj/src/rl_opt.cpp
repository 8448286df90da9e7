#include "overopt/rl_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "overopt/error.hpp"
#include "overopt/parallel.hpp"

namespace overopt::rl {
namespace {

constexpr double kMonotoneTolerance = 1e-9;

void check_shapes(const Policy& a, const Policy& b, std::size_t scores) {
  if (a.contexts() != b.contexts() || a.outcomes() != b.outcomes())
    throw DomainError("rl: policy shapes differ");
  if (scores != 0 && scores != a.table().size())
    throw DomainError("rl: score table does not match policy shape");
}

/// Normalizes log-weights in place (log-sum-exp), writes the probabilities
/// and returns the max before normalization.
double log_normalize(std::span<double> logp, std::span<double> probs) {
  const double top = *std::max_element(logp.begin(), logp.end());
  if (!std::isfinite(top)) return top;
  double total = 0.0;
  for (std::size_t m = 0; m < logp.size(); ++m) {
    probs[m] = std::exp(logp[m] - top);
    total += probs[m];
  }
  const double log_z = top + std::log(total);
  for (double& v : logp) v -= log_z;
  for (double& p : probs) p /= total;
  return top;
}

/// Exact scores of a log-policy: KL to the initial log-policy and the
/// expectations of two score tables.
struct Snapshot {
  double kl = 0.0;
  double proxy = 0.0;
  double gold = 0.0;
};

Snapshot snapshot(std::span<const double> logp, std::span<const double> probs,
                  std::span<const double> log_init, std::span<const double> proxy,
                  std::span<const double> gold, int contexts) {
  Snapshot s;
  const std::size_t M = logp.size() / static_cast<std::size_t>(contexts);
  for (int c = 0; c < contexts; ++c) {
    double kl = 0.0, ep = 0.0, eg = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t i = static_cast<std::size_t>(c) * M + m;
      const double p = probs[i];
      if (p == 0.0) continue;
      kl += p * (logp[i] - log_init[i]);
      ep += p * proxy[i];
      eg += p * gold[i];
    }
    s.kl += kl;
    s.proxy += ep;
    s.gold += eg;
  }
  s.kl = std::max(0.0, s.kl / contexts);
  s.proxy /= contexts;
  s.gold /= contexts;
  return s;
}

void validate_step_params(double eta, double lambda) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw DomainError("rl: eta must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw DomainError("rl: lambda must be non-negative");
}

/// One mirror-ascent step in log space, in place. Throws on overflow.
void step_logs(std::span<double> logp, std::span<double> probs, std::span<const double> log_init,
               std::span<const double> proxy, int contexts, double eta, double lambda) {
  const std::size_t M = logp.size() / static_cast<std::size_t>(contexts);
  for (int c = 0; c < contexts; ++c) {
    std::span<double> row = logp.subspan(static_cast<std::size_t>(c) * M, M);
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t i = static_cast<std::size_t>(c) * M + m;
      row[m] += eta * (proxy[i] - lambda * (row[m] - log_init[i]));
    }
    const double top = log_normalize(row, probs.subspan(static_cast<std::size_t>(c) * M, M));
    if (!std::isfinite(top)) {
      throw NumericalError("rl_step: non-finite update (eta=" + std::to_string(eta) +
                           ", max logit=" + std::to_string(top) + ")");
    }
  }
}

}  // namespace

Policy rl_step(const Policy& policy, std::span<const double> proxy_scores,
               const Policy& initial, double eta, double lambda) {
  validate_step_params(eta, lambda);
  check_shapes(policy, initial, proxy_scores.size());
  std::vector<double> logp(policy.table().size());
  std::vector<double> log_init(initial.table().size());
  for (std::size_t i = 0; i < logp.size(); ++i) {
    if (!(policy.table()[i] > 0.0) || !(initial.table()[i] > 0.0))
      throw DomainError("rl_step: policies must have full support");
    logp[i] = std::log(policy.table()[i]);
    log_init[i] = std::log(initial.table()[i]);
  }
  Policy out(policy.contexts(), policy.outcomes(), policy.temperature());
  std::vector<double> probs(logp.size());
  step_logs(logp, probs, log_init, proxy_scores, policy.contexts(), eta, lambda);
  for (int c = 0; c < out.contexts(); ++c) {
    auto row = out.row(c);
    std::copy_n(probs.begin() + static_cast<std::ptrdiff_t>(c) * out.outcomes(), out.outcomes(), row.begin());
  }
  return out;
}

double kl_from_init(const Policy& policy, const Policy& initial) {
  check_shapes(policy, initial, 0);
  double total = 0.0;
  for (int c = 0; c < policy.contexts(); ++c) {
    auto p = policy.row(c);
    auto q = initial.row(c);
    double kl = 0.0;
    for (std::size_t m = 0; m < p.size(); ++m) {
      if (p[m] == 0.0) continue;
      if (!(q[m] > 0.0)) throw DomainError("kl_from_init: support mismatch");
      kl += p[m] * std::log(p[m] / q[m]);
    }
    total += kl;
  }
  return std::max(0.0, total / policy.contexts());
}

double max_total_variation(const Policy& a, const Policy& b) {
  check_shapes(a, b, 0);
  double worst = 0.0;
  for (int c = 0; c < a.contexts(); ++c) {
    auto p = a.row(c);
    auto q = b.row(c);
    double tv = 0.0;
    for (std::size_t m = 0; m < p.size(); ++m) tv += std::abs(p[m] - q[m]);
    worst = std::max(worst, 0.5 * tv);
  }
  return worst;
}

RlResult run_rl(const World& world, const RewardModel& proxy_rm, const RewardModel& gold_rm,
                const Policy& initial, const RlConfig& config) {
  if (config.steps < 1) throw DomainError("run_rl: steps must be >= 1");
  if (config.record_every < 1) throw DomainError("run_rl: record_every must be >= 1");
  validate_step_params(config.eta, config.lambda);
  const std::vector<double> proxy = score_table(world, proxy_rm);
  const std::vector<double> gold = score_table(world, gold_rm);
  check_shapes(initial, initial, proxy.size());

  std::vector<double> log_init(initial.table().size());
  for (std::size_t i = 0; i < log_init.size(); ++i) {
    if (!(initial.table()[i] > 0.0)) throw DomainError("run_rl: initial policy needs full support");
    log_init[i] = std::log(initial.table()[i]);
  }
  std::vector<double> logp = log_init;
  const int C = initial.contexts();

  RlResult result;
  auto& trace = result.trace;
  trace.method = Method::rl;
  trace.config = {{"optimizer", "mirror-ascent"}, {"steps", config.steps},
                  {"eta", config.eta},             {"lambda", config.lambda},
                  {"record_every", config.record_every}};

  auto record = [&](int step, const Snapshot& s) {
    trace.points.push_back({step, s.kl, std::sqrt(s.kl), s.proxy, s.gold, 0.0, 0.0});
  };
  std::vector<double> probs = initial.table();
  Snapshot previous = snapshot(logp, probs, log_init, proxy, gold, C);
  record(0, previous);
  const bool check_monotone = config.lambda == 0.0;
  for (int step = 1; step <= config.steps; ++step) {
    step_logs(logp, probs, log_init, proxy, C, config.eta, config.lambda);
    const bool due = step % config.record_every == 0 || step == config.steps;
    if (!due && !check_monotone) continue;
    const Snapshot current = snapshot(logp, probs, log_init, proxy, gold, C);
    if (check_monotone) {
      if (current.kl < previous.kl - kMonotoneTolerance ||
          current.proxy < previous.proxy - kMonotoneTolerance) {
        throw NumericalError("run_rl: lambda=0 ascent not monotone at step " +
                             std::to_string(step) + " (reduce eta)");
      }
      previous = current;
    }
    if (due) record(step, current);
  }
  result.final_policy = Policy(C, initial.outcomes(), initial.temperature());
  for (int c = 0; c < C; ++c) {
    auto row = result.final_policy.row(c);
    std::copy_n(probs.begin() + static_cast<std::ptrdiff_t>(c) * initial.outcomes(), initial.outcomes(),
                row.begin());
  }
  return result;
}

Policy penalized_optimum(const Policy& initial, std::span<const double> proxy_scores,
                         double lambda) {
  if (!(lambda > 0.0)) throw DomainError("penalized_optimum: lambda must be positive");
  check_shapes(initial, initial, proxy_scores.size());
  std::vector<double> logp(initial.table().size());
  for (std::size_t i = 0; i < logp.size(); ++i)
    logp[i] = std::log(initial.table()[i]) + proxy_scores[i] / lambda;
  const auto M = static_cast<std::size_t>(initial.outcomes());
  Policy out(initial.contexts(), initial.outcomes(), initial.temperature());
  for (int c = 0; c < initial.contexts(); ++c)
    log_normalize(std::span<double>(logp).subspan(static_cast<std::size_t>(c) * M, M), out.row(c));
  return out;
}

std::vector<OptimizationTrace> kl_penalty_frontier(const World& world,
                                                   const RewardModel& proxy_rm,
                                                   const RewardModel& gold_rm,
                                                   const Policy& initial,
                                                   std::span<const double> lambdas,
                                                   const RlConfig& base, int threads) {
  if (lambdas.empty()) throw UsageError("kl_penalty_frontier: empty lambda grid");
  std::vector<OptimizationTrace> traces(lambdas.size());
  parallel_for(static_cast<int>(lambdas.size()), threads, [&](int i) {
    RlConfig config = base;
    config.lambda = lambdas[static_cast<std::size_t>(i)];
    traces[static_cast<std::size_t>(i)] = run_rl(world, proxy_rm, gold_rm, initial, config).trace;
  });
  return traces;
}

std::optional<double> gold_at_kl(const OptimizationTrace& trace, double kl) {
  const auto& pts = trace.points;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const auto& a = pts[i - 1];
    const auto& b = pts[i];
    if (kl < a.kl_nats || kl > b.kl_nats) continue;
    if (b.kl_nats == a.kl_nats) return a.gold_score;
    const double t = (kl - a.kl_nats) / (b.kl_nats - a.kl_nats);
    return a.gold_score + t * (b.gold_score - a.gold_score);
  }
  return std::nullopt;
}

}  // namespace overopt::rl

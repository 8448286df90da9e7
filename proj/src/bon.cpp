#include "overopt/bon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "overopt/error.hpp"
#include "overopt/parallel.hpp"
#include "overopt/random.hpp"

namespace overopt::bon {
namespace {

bool proxy_less(const ScoredSample& a, const ScoredSample& b) {
  if (a.proxy != b.proxy) return a.proxy < b.proxy;
  return a.tiebreak < b.tiebreak;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_sizes(std::int64_t pool, std::int64_t n) {
  if (n < 1) throw DomainError("best-of-n: n must be >= 1");
  if (pool > kMaxPool) {
    throw CapacityError("best-of-n: pool of " + std::to_string(pool) +
                        " exceeds the exact-combinatorics limit " + std::to_string(kMaxPool));
  }
  if (n > pool) {
    throw UsageError("best-of-n: n=" + std::to_string(n) + " exceeds pool size " +
                     std::to_string(pool));
  }
}

}  // namespace


double kl_bon(std::int64_t n) {
  if (n < 1) throw DomainError("kl_bon: n must be >= 1");
  const auto nn = static_cast<double>(n);
  return std::log(nn) - (nn - 1.0) / nn;
}

std::vector<double> order_weights(std::int64_t pool, std::int64_t n) {
  check_sizes(pool, n);
  std::vector<double> w(static_cast<std::size_t>(pool), 0.0);
  // w_i / w_{i-1} = (i - 1) / (i - n), i.e. w_{i-1} = w_i (i - n) / (i - 1).
  double current = static_cast<double>(n) / static_cast<double>(pool);
  for (std::int64_t i = pool; i >= n; --i) {
    w[static_cast<std::size_t>(i - 1)] = current;
    if (i > 1) current *= static_cast<double>(i - n) / static_cast<double>(i - 1);
    if (current < std::numeric_limits<double>::min()) break;
  }
  return w;
}

BonEstimate unbiased_estimate_sorted(std::span<const ScoredSample> samples, std::int64_t n) {
  const auto pool = static_cast<std::int64_t>(samples.size());
  const std::vector<double> weights = order_weights(pool, n);
  BonEstimate out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.expected_proxy += weights[i] * samples[i].proxy;
    out.expected_gold += weights[i] * samples[i].gold;
  }
  return out;
}

BonEstimate unbiased_estimate(std::span<ScoredSample> samples, std::int64_t n) {
  check_sizes(static_cast<std::int64_t>(samples.size()), n);
  std::sort(samples.begin(), samples.end(), proxy_less);
  return unbiased_estimate_sorted(samples, n);
}

std::uint64_t tiebreak_key(std::uint64_t seed, int context, int outcome) {
  return splitmix64(splitmix64(seed) ^ (static_cast<std::uint64_t>(context) << 32) ^
                    static_cast<std::uint64_t>(outcome));
}

OptimizationTrace bon_curve(const World& world, const Policy& policy,
                            const RewardModel& proxy_rm, const RewardModel& gold_rm,
                            const CurveConfig& config) {
  if (config.n_grid.empty()) throw UsageError("bon_curve: empty n grid");
  if (!std::is_sorted(config.n_grid.begin(), config.n_grid.end()))
    throw UsageError("bon_curve: n grid must be sorted ascending");
  const std::int64_t n_max = config.n_grid.back();
  const std::int64_t pool = config.pool_size > 0 ? config.pool_size : 4 * n_max;
  for (auto n : config.n_grid) check_sizes(pool, n);

  const std::vector<double> proxy_scores = score_table(world, proxy_rm);
  const std::vector<double> gold_scores = score_table(world, gold_rm);
  const OutcomeSampler sampler(policy);

  std::vector<std::vector<double>> weights;
  std::vector<std::size_t> first_nonzero;
  weights.reserve(config.n_grid.size());
  for (auto n : config.n_grid) {
    weights.push_back(order_weights(pool, n));
    const auto& w = weights.back();
    first_nonzero.push_back(static_cast<std::size_t>(
        std::find_if(w.begin(), w.end(), [](double v) { return v != 0.0; }) - w.begin()));
  }

  const int C = world.contexts();
  const std::size_t G = config.n_grid.size();
  // Per-context estimates, reduced in context order below.
  std::vector<double> proxy_est(static_cast<std::size_t>(C) * G);
  std::vector<double> gold_est(static_cast<std::size_t>(C) * G);

  parallel_for(C, config.threads, [&](int c) {
    Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(c));
    std::vector<ScoredSample> samples(static_cast<std::size_t>(pool));
    for (auto& s : samples) {
      const int m = sampler.draw(c, rng);
      const std::size_t idx = world.index(c, m);
      s = {proxy_scores[idx], gold_scores[idx], tiebreak_key(config.seed, c, m)};
    }
    std::sort(samples.begin(), samples.end(), proxy_less);
    for (std::size_t g = 0; g < G; ++g) {
      double proxy = 0.0;
      double gold = 0.0;
      const auto& w = weights[g];
      for (std::size_t i = first_nonzero[g]; i < samples.size(); ++i) {
        proxy += w[i] * samples[i].proxy;
        gold += w[i] * samples[i].gold;
      }
      proxy_est[static_cast<std::size_t>(c) * G + g] = proxy;
      gold_est[static_cast<std::size_t>(c) * G + g] = gold;
    }
  });

  OptimizationTrace trace;
  trace.method = Method::bon;
  trace.config = {{"pool_size", pool}, {"seed", config.seed}, {"n_grid", config.n_grid}};
  for (std::size_t g = 0; g < G; ++g) {
    double proxy_sum = 0.0, gold_sum = 0.0;
    for (int c = 0; c < C; ++c) {
      proxy_sum += proxy_est[static_cast<std::size_t>(c) * G + g];
      gold_sum += gold_est[static_cast<std::size_t>(c) * G + g];
    }
    const double proxy_mean = proxy_sum / C;
    const double gold_mean = gold_sum / C;
    double proxy_ss = 0.0, gold_ss = 0.0;
    for (int c = 0; c < C; ++c) {
      const double dp = proxy_est[static_cast<std::size_t>(c) * G + g] - proxy_mean;
      const double dg = gold_est[static_cast<std::size_t>(c) * G + g] - gold_mean;
      proxy_ss += dp * dp;
      gold_ss += dg * dg;
    }
    TracePoint point;
    point.step_or_n = config.n_grid[g];
    point.kl_nats = kl_bon(point.step_or_n);
    point.d = std::sqrt(point.kl_nats);
    point.proxy_score = proxy_mean;
    point.gold_score = gold_mean;
    if (C > 1) {
      point.proxy_se = std::sqrt(proxy_ss / (C - 1) / C);
      point.gold_se = std::sqrt(gold_ss / (C - 1) / C);
    }
    trace.points.push_back(point);
  }
  return trace;
}

std::vector<double> exact_bon_distribution(std::span<const double> base_probs,
                                           std::span<const double> proxy_scores,
                                           std::int64_t n) {
  if (n < 1) throw DomainError("exact_bon_distribution: n must be >= 1");
  if (base_probs.size() != proxy_scores.size())
    throw UsageError("exact_bon_distribution: size mismatch");
  std::vector<std::size_t> order(base_probs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return proxy_scores[a] != proxy_scores[b] ? proxy_scores[a] < proxy_scores[b] : a < b;
  });
  std::vector<double> out(base_probs.size(), 0.0);
  double below = 0.0;
  const auto nn = static_cast<double>(n);
  for (std::size_t idx : order) {
    const double upto = std::min(1.0, below + base_probs[idx]);
    out[idx] = std::pow(upto, nn) - std::pow(below, nn);
    below = upto;
  }
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("kl_divergence: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (!(q[i] > 0.0)) throw DomainError("kl_divergence: support mismatch");
    total += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(total, 0.0);
}

}  // namespace overopt::bon

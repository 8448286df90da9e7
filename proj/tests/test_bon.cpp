#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "overopt/bon.hpp"
#include "overopt/error.hpp"
#include "overopt/proxy_rm.hpp"

using namespace overopt;
using namespace overopt::bon;

namespace {

// Average over every n-subset of the score of its proxy-argmax.
BonEstimate brute_force(const std::vector<ScoredSample>& pool, int n) {
  const int N = static_cast<int>(pool.size());
  double proxy = 0.0, gold = 0.0;
  long subsets = 0;
  for (unsigned mask = 0; mask < (1u << N); ++mask) {
    if (std::popcount(mask) != n) continue;
    int best = -1;
    for (int i = 0; i < N; ++i) {
      if (!(mask & (1u << i))) continue;
      if (best < 0 || pool[i].proxy > pool[best].proxy ||
          (pool[i].proxy == pool[best].proxy && pool[i].tiebreak > pool[best].tiebreak))
        best = i;
    }
    proxy += pool[best].proxy;
    gold += pool[best].gold;
    ++subsets;
  }
  return {proxy / subsets, gold / subsets};
}

}  // namespace

TEST_CASE("kl_bon closed form") {
  CHECK(kl_bon(1) == 0.0);
  CHECK(std::abs(kl_bon(1000) - 5.9088) < 1e-4);
  CHECK(std::abs(kl_bon(60000) - 10.0021) < 1e-4);
  for (int n = 1; n < 200; ++n) CHECK(kl_bon(n + 1) > kl_bon(n));
  CHECK_THROWS_AS(kl_bon(0), DomainError);
}

TEST_CASE("estimator matches exhaustive enumeration") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> normal;
  for (int N = 1; N <= 8; ++N) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<ScoredSample> pool(N);
      for (int i = 0; i < N; ++i) pool[i] = {normal(gen), normal(gen), gen()};
      for (int n = 1; n <= N; ++n) {
        auto copy = pool;
        const auto est = unbiased_estimate(copy, n);
        const auto ref = brute_force(pool, n);
        CHECK(est.expected_proxy == doctest::Approx(ref.expected_proxy).epsilon(1e-12));
        CHECK(est.expected_gold == doctest::Approx(ref.expected_gold).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("estimator hand values") {
  std::vector<ScoredSample> pool{{1, 1, 0}, {2, 2, 1}, {3, 3, 2}};
  CHECK(unbiased_estimate(pool, 2).expected_gold == doctest::Approx(8.0 / 3.0));
  CHECK(unbiased_estimate(pool, 1).expected_gold == doctest::Approx(2.0));
  std::vector<ScoredSample> mixed{{0.3, -1, 0}, {2.0, 5, 1}, {-1, 7, 2}, {0.1, 4, 3}};
  CHECK(unbiased_estimate(mixed, 4).expected_gold == doctest::Approx(5.0));
}

TEST_CASE("order weights sum to one") {
  for (std::int64_t N : {1, 2, 7, 100, 4096, 250000}) {
    for (std::int64_t n : {std::int64_t{1}, std::int64_t{2}, N / 2 + 1, N}) {
      if (n > N) continue;
      const auto w = order_weights(N, n);
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("estimator errors") {
  std::vector<ScoredSample> pool(3);
  CHECK_THROWS_AS(unbiased_estimate(pool, 4), UsageError);
  CHECK_THROWS_AS(unbiased_estimate(pool, 0), DomainError);
  CHECK_THROWS_AS(order_weights(kMaxPool + 1, 2), CapacityError);
}

TEST_CASE("exact discrete BoN KL tracks the analytic formula") {
  const int M = 4096;
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.99, 1.01);
  std::normal_distribution<double> normal;
  std::vector<double> probs(M), scores(M);
  double total = 0.0;
  for (int i = 0; i < M; ++i) total += probs[i] = u(gen);
  for (double& p : probs) p /= total;
  for (double& s : scores) s = normal(gen);
  for (int n : {2, 4, 16}) {
    const auto p = exact_bon_distribution(probs, scores, n);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(kl_divergence(p, probs) - kl_bon(n)) < 0.05);
  }
}

TEST_CASE("bon_curve on a small world") {
  auto cfg = testing_helpers::small_config(8, 128, 6, 5);
  const World world = build_world(cfg);
  const Policy init = initial_policy(world, 1.0);
  const RewardModel gold = proxy::normalized_gold(world, init);

  CurveConfig cc;
  cc.n_grid = {1, 2, 4, 8, 16, 64, 256};
  cc.seed = 9;
  const auto trace = bon_curve(world, init, gold, gold, cc);
  REQUIRE(trace.points.size() == cc.n_grid.size());
  const double pool = 4.0 * 256;
  CHECK(std::abs(trace.points[0].gold_score) < 3.0 / std::sqrt(pool * world.contexts()));
  for (std::size_t i = 1; i < trace.points.size(); ++i) {
    CHECK(trace.points[i].proxy_score >= trace.points[i - 1].proxy_score);
    CHECK(trace.points[i].kl_nats == kl_bon(trace.points[i].step_or_n));
    CHECK(trace.points[i].d == doctest::Approx(std::sqrt(trace.points[i].kl_nats)).epsilon(1e-12));
  }

  SUBCASE("thread count does not change the trace") {
    cc.threads = 3;
    const auto again = bon_curve(world, init, gold, gold, cc);
    for (std::size_t i = 0; i < trace.points.size(); ++i) {
      CHECK(again.points[i].gold_score == trace.points[i].gold_score);
      CHECK(again.points[i].gold_se == trace.points[i].gold_se);
    }
  }
}

TEST_CASE("pure-noise proxy selects nothing gold") {
  // Gold lives on feature 0 only; the proxy sees feature 1 only.
  auto cfg = testing_helpers::small_config(16, 512, 4, 21);
  cfg.gold_weights = std::vector<double>{1, 0, 0, 0};
  const World world = build_world(cfg);
  const Policy init = initial_policy(world, 1.0);
  const RewardModel gold = proxy::normalized_gold(world, init);
  RewardModel noise;
  noise.weights = {0, 1, 0, 0};
  noise.feature_mask = {1};
  noise = proxy::normalize(noise, world, init, false);

  CurveConfig cc;
  cc.n_grid = {1, 4, 16, 64, 256};
  cc.seed = 4;
  const auto trace = bon_curve(world, init, noise, gold, cc);
  for (const auto& p : trace.points) CHECK(std::abs(p.gold_score) < 5.0 * std::max(p.gold_se, 1e-3));
}

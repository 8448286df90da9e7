#include <array>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "overopt/error.hpp"
#include "overopt/proxy_rm.hpp"
#include "overopt/rl_opt.hpp"

using namespace overopt;
using namespace overopt::rl;

namespace {

Policy uniform(int C, int M) {
  Policy p(C, M, 1.0);
  for (int c = 0; c < C; ++c)
    for (auto& v : p.row(c)) v = 1.0 / M;
  return p;
}

// Brute-force maximizer of E[r] - lambda KL over 3-outcome policies, searched
// on a zooming grid of the two free logits.
std::array<double, 3> grid_optimum(const std::array<double, 3>& r, const std::array<double, 3>& q,
                                   double lambda) {
  auto policy = [](double u, double v) {
    const double z = 1.0 + std::exp(u) + std::exp(v);
    return std::array<double, 3>{std::exp(u) / z, std::exp(v) / z, 1.0 / z};
  };
  auto objective = [&](double u, double v) {
    const auto p = policy(u, v);
    double val = 0.0;
    for (int i = 0; i < 3; ++i) val += p[i] * r[i] - lambda * p[i] * std::log(p[i] / q[i]);
    return val;
  };
  double cu = 0.0, cv = 0.0, width = 20.0;
  for (int round = 0; round < 60; ++round) {
    double best = -INFINITY, bu = cu, bv = cv;
    for (int i = -20; i <= 20; ++i)
      for (int j = -20; j <= 20; ++j) {
        const double u = cu + width * i / 20, v = cv + width * j / 20;
        const double val = objective(u, v);
        if (val > best) best = val, bu = u, bv = v;
      }
    cu = bu, cv = bv, width *= 0.7;
  }
  return policy(cu, cv);
}

}  // namespace

TEST_CASE("one step on two outcomes") {
  const Policy init = uniform(1, 2);
  const std::vector<double> r = {1.0, 0.0};
  const Policy p = rl_step(init, r, init, 1.0, 0.0);
  CHECK(p.row(0)[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-14));
  const double a = std::exp(1.0) / (std::exp(1.0) + 1.0);
  const double kl = a * std::log(2 * a) + (1 - a) * std::log(2 * (1 - a));
  CHECK(kl_from_init(p, init) == doctest::Approx(kl).epsilon(1e-13));
}

TEST_CASE("constant reward leaves the policy fixed") {
  const World w = build_world(testing_helpers::small_config());
  const Policy init = initial_policy(w, 1.0);
  const std::vector<double> r(init.table().size(), 3.7);
  const Policy p = rl_step(init, r, init, 0.4, 0.0);
  CHECK(max_total_variation(p, init) < 1e-15);
  CHECK(kl_from_init(p, init) < 1e-15);
}

TEST_CASE("penalized optimum closed form") {
  const Policy init = uniform(1, 2);
  const std::vector<double> r = {1.0, 0.0};
  const Policy star = penalized_optimum(init, r, 1.0);
  CHECK(star.row(0)[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-15));
  const Policy soft = penalized_optimum(init, r, 1e6);
  CHECK(max_total_variation(soft, init) < 1e-6);
  CHECK_THROWS_AS(penalized_optimum(init, r, 0.0), DomainError);
}

TEST_CASE("iterates converge to the penalized optimum") {
  Policy init(1, 3, 1.0);
  init.row(0)[0] = 0.5, init.row(0)[1] = 0.3, init.row(0)[2] = 0.2;
  const std::array<double, 3> r = {0.2, 1.0, -0.5};
  for (double lambda : {0.1, 1.0}) {
    Policy p = init;
    for (int i = 0; i < 3000; ++i) p = rl_step(p, r, init, 0.5, lambda);
    const Policy star = penalized_optimum(init, r, lambda);
    CHECK(max_total_variation(p, star) < 1e-10);
    const auto oracle = grid_optimum(r, {0.5, 0.3, 0.2}, lambda);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(star.row(0)[i] - oracle[i]) < 1e-7);
  }
}

TEST_CASE("unpenalized ascent concentrates on the argmax") {
  const World w = build_world(testing_helpers::small_config(2, 16, 4, 3));
  const Policy init = initial_policy(w, 1.0);
  const RewardModel gold = proxy::normalized_gold(w, init);
  RlConfig cfg;
  cfg.steps = 3000;
  cfg.eta = 0.5;
  const RlResult res = run_rl(w, gold, gold, init, cfg);
  const auto scores = score_table(w, gold);
  for (int c = 0; c < w.contexts(); ++c) {
    int best = 0;
    for (int m = 1; m < w.outcomes(); ++m)
      if (scores[w.index(c, m)] > scores[w.index(c, best)]) best = m;
    CHECK(res.final_policy.row(c)[best] > 0.999);
  }
  const auto& pts = res.trace.points;
  CHECK(pts.front().step_or_n == 0);
  CHECK(pts.back().step_or_n == 3000);
  CHECK(pts.front().kl_nats == 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK(pts[i].kl_nats >= pts[i - 1].kl_nats - 1e-9);
    CHECK(pts[i].proxy_score >= pts[i - 1].proxy_score - 1e-9);
    CHECK(pts[i].d == doctest::Approx(std::sqrt(pts[i].kl_nats)));
  }
  CHECK(res.trace.config["optimizer"] == "mirror-ascent");
}

TEST_CASE("trace is deterministic and records the requested steps") {
  const World w = build_world(testing_helpers::small_config());
  const Policy init = initial_policy(w, 1.0);
  const RewardModel gold = proxy::normalized_gold(w, init);
  RlConfig cfg;
  cfg.steps = 25;
  cfg.record_every = 10;
  const auto a = run_rl(w, gold, gold, init, cfg);
  const auto b = run_rl(w, gold, gold, init, cfg);
  REQUIRE(a.trace.points.size() == 4);  // 0, 10, 20, 25
  CHECK(a.trace.points[3].step_or_n == 25);
  CHECK(a.final_policy == b.final_policy);
}

TEST_CASE("KL penalty frontier") {
  const World w = build_world(testing_helpers::small_config(4, 32, 6, 5));
  const Policy init = initial_policy(w, 1.0);
  const RewardModel gold = proxy::normalized_gold(w, init);
  RlConfig base;
  base.steps = 400;
  base.eta = 0.2;
  const std::vector<double> lambdas = {0.0, 0.5, 2.0};
  const auto one = kl_penalty_frontier(w, gold, gold, init, lambdas, base, 1);
  const auto three = kl_penalty_frontier(w, gold, gold, init, lambdas, base, 3);
  REQUIRE(one.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(one[i].points.size() == three[i].points.size());
    CHECK(one[i].points.back().kl_nats == three[i].points.back().kl_nats);
  }
  CHECK(one[0].points.back().kl_nats > one[1].points.back().kl_nats);
  CHECK(one[1].points.back().kl_nats > one[2].points.back().kl_nats);
  const auto g = gold_at_kl(one[0], one[2].points.back().kl_nats);
  REQUIRE(g.has_value());
  CHECK(!gold_at_kl(one[2], one[0].points.back().kl_nats * 10).has_value());
  CHECK_THROWS_AS(kl_penalty_frontier(w, gold, gold, init, std::vector<double>{}, base, 1), UsageError);
}

TEST_CASE("argument errors") {
  const Policy init = uniform(1, 2);
  const std::vector<double> r = {1.0, 0.0};
  CHECK_THROWS_AS(rl_step(init, r, init, 0.0, 0.0), DomainError);
  CHECK_THROWS_AS(rl_step(init, r, init, 1.0, -1.0), DomainError);
  CHECK_THROWS_AS(rl_step(init, std::vector<double>{1.0}, init, 1.0, 0.0), DomainError);
  CHECK_THROWS_AS(rl_step(init, std::vector<double>{1e300, -1e300}, init, 1e300, 0.0), NumericalError);
  Policy holes = init;
  holes.row(0)[0] = 1.0, holes.row(0)[1] = 0.0;
  CHECK_THROWS_AS(kl_from_init(init, holes), DomainError);
}

#include <cmath>
#include <random>

#include "doctest.h"
#include "overopt/error.hpp"
#include "overopt/scaling_fit.hpp"

using namespace overopt::fit;

namespace {

std::vector<Point> sample(Form form, double alpha, double beta, double noise, unsigned seed,
                          int count = 50, double d_max = 3.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eps(0.0, 1.0);
  std::vector<Point> pts;
  for (int i = 1; i <= count; ++i) {
    const double d = d_max * i / count;
    const double r = form == Form::bon ? d * (alpha - beta * d) : d * (alpha - beta * std::log(d));
    pts.push_back({d, r * (1.0 + noise * eps(rng)), 1.0});
  }
  return pts;
}

}  // namespace

TEST_CASE("noiseless recovery") {
  const auto bon = fit_bon(sample(Form::bon, 1.3, 0.4, 0.0, 0));
  CHECK(std::abs(bon.alpha - 1.3) < 1e-10);
  CHECK(std::abs(bon.beta - 0.4) < 1e-10);
  CHECK(bon.rmse < 1e-12);
  CHECK(bon.point_count == 50);
  const auto rl = fit_rl(sample(Form::rl, 0.8, 0.25, 0.0, 0));
  CHECK(std::abs(rl.alpha - 0.8) < 1e-10);
  CHECK(std::abs(rl.beta - 0.25) < 1e-10);
}

TEST_CASE("noisy recovery on average") {
  double a = 0, b = 0;
  for (unsigned s = 0; s < 20; ++s) {
    const auto f = fit_bon(sample(Form::bon, 1.0, 0.3, 0.01, s));
    a += f.alpha / 20, b += f.beta / 20;
  }
  CHECK(std::abs(a - 1.0) < 0.01);
  CHECK(std::abs(b - 0.3) < 0.01 * 0.3);
}

TEST_CASE("scale equivariance") {
  auto pts = sample(Form::rl, 0.9, 0.2, 0.02, 3);
  const auto f = fit_rl(pts);
  for (auto& p : pts) p.reward *= 3.5;
  const auto g = fit_rl(pts);
  CHECK(g.alpha == doctest::Approx(3.5 * f.alpha).epsilon(1e-12));
  CHECK(g.beta == doctest::Approx(3.5 * f.beta).epsilon(1e-12));
}

TEST_CASE("forms vanish at the origin") {
  FunctionalFit f;
  for (Form form : {Form::bon, Form::rl, Form::rl_log1p, Form::rl_power}) {
    f.form = form;
    f.alpha = 1.0;
    f.beta = 0.5;
    f.gamma = 0.3;
    CHECK(f(0.0) == 0.0);
    CHECK(std::abs(f(1e-12)) < 1e-10);
  }
}

TEST_CASE("peak prediction is a local maximum matching a dense grid") {
  for (Form form : {Form::bon, Form::rl}) {
    FunctionalFit f;
    f.form = form;
    f.alpha = 1.1;
    f.beta = 0.35;
    const Peak p = predict_peak(f);
    const double eps = 1e-6 * p.d_star;
    CHECK(f(p.d_star + eps) < f(p.d_star));
    CHECK(f(p.d_star - eps) < f(p.d_star));
    CHECK(f(p.d_star) == doctest::Approx(p.r_star).epsilon(1e-12));
    double best_d = 0, best = -INFINITY;
    for (int i = 1; i <= 2000000; ++i) {
      const double d = 10.0 * i / 2000000;
      if (f(d) > best) best = f(d), best_d = d;
    }
    CHECK(std::abs(best_d - p.d_star) / p.d_star < 1e-5);
  }
  FunctionalFit flat;
  flat.beta = 0.0;
  CHECK_THROWS_AS(predict_peak(flat), overopt::DomainError);
}

TEST_CASE("rl fit refuses points below the floor") {
  auto pts = sample(Form::rl, 0.8, 0.25, 0.0, 0);
  pts.insert(pts.begin(), Point{0.0, 0.0, 1.0});
  CHECK_THROWS_AS(fit_rl(pts), overopt::UsageError);
  RlOptions opt;
  opt.d_floor = 0.0;
  CHECK_THROWS_AS(fit_rl(pts, opt), overopt::UsageError);
}

TEST_CASE("fixed alpha and family fits") {
  const auto a = sample(Form::rl, 0.8, 0.25, 0.0, 0);
  const auto b = sample(Form::rl, 0.8, 0.4, 0.0, 0);
  RlOptions opt;
  opt.fixed_alpha = 0.8;
  CHECK(std::abs(fit_rl(a, opt).beta - 0.25) < 1e-10);
  const std::vector<std::vector<Point>> traces = {a, b};
  const FamilyFit fam = fit_rl_family(traces);
  CHECK(std::abs(fam.alpha - 0.8) < 1e-10);
  CHECK(std::abs(fam.betas[0] - 0.25) < 1e-10);
  CHECK(std::abs(fam.betas[1] - 0.4) < 1e-10);
}

TEST_CASE("alternative forms are ranked against each other") {
  const auto pts = sample(Form::rl, 0.8, 0.25, 0.0, 0);
  const auto res = fit_alt_rl_forms(pts, Form::rl_power);
  CHECK(res.best.form == Form::rl_power);
  REQUIRE(res.best.gamma.has_value());
  CHECK(*res.best.gamma >= 0.01);
  CHECK(*res.best.gamma <= 2.0);
  CHECK(res.candidate_rmse.size() >= 3);
  CHECK_THROWS_AS(fit_alt_rl_forms(pts, Form::bon), overopt::UsageError);
}

TEST_CASE("iterated RLHF gain") {
  for (double beta : {0.1, 0.5, 1.0})
    for (double d : {0.5, 1.0, 3.0})
      for (int k : {2, 4, 10}) {
        const double gain = iterated_rlhf_prediction(1.0, beta, d, k) - iterated_rlhf_prediction(1.0, beta, d, 1);
        CHECK(std::abs(gain - beta * d * std::log(k)) < 1e-12);
      }
  FunctionalFit f;
  f.form = Form::rl;
  f.alpha = 1.0;
  f.beta = 0.3;
  CHECK(iterated_rlhf_prediction(1.0, 0.3, 2.0, 1) == doctest::Approx(f(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(iterated_rlhf_prediction(1, 1, 1, 0), overopt::DomainError);
}

TEST_CASE("coefficient trend") {
  const std::vector<double> caps = {2, 4, 8, 16};
  std::vector<double> vals;
  for (double c : caps) vals.push_back(1.0 - 0.2 * std::log(c));
  const TrendFit t = coefficient_trend_fit(caps, vals);
  CHECK(t.slope == doctest::Approx(-0.2).epsilon(1e-12));
  CHECK(t.intercept == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(coefficient_trend_fit(std::vector<double>{2}, std::vector<double>{1}), overopt::FitError);
}

TEST_CASE("extrapolation check") {
  const auto pts = sample(Form::bon, 1.0, 0.3, 0.0, 0, 50, std::sqrt(10.0));
  const auto res = extrapolation_check(pts, std::sqrt(6.0), Form::bon);
  CHECK(res.held_out_rmse < 1e-10);
  CHECK(res.held_out_count > 2);
  CHECK_THROWS_AS(extrapolation_check(pts, 100.0, Form::bon), overopt::UsageError);
}

TEST_CASE("fit errors") {
  std::vector<Point> one = {{1.0, 1.0, 1.0}};
  CHECK_THROWS_AS(fit_bon(one), overopt::FitError);
  std::vector<Point> same = {{1.0, 1.0, 1.0}, {1.0, 2.0, 1.0}, {1.0, 3.0, 1.0}};
  CHECK_THROWS_AS(fit_bon(same), overopt::FitError);
  CHECK_THROWS_AS(form_from_string("cubic"), overopt::UsageError);
  CHECK(form_from_string("rl_power") == Form::rl_power);
}

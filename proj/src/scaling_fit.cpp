#include "overopt/scaling_fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <string>

#include "overopt/error.hpp"

namespace overopt::fit {
namespace {

constexpr double kGammaMin = 0.01;
constexpr double kGammaMax = 2.0;

/// The "beta" basis function of each form: R = alpha * d - beta * penalty(d).
double penalty(Form form, double d, double gamma) {
  switch (form) {
    case Form::bon:
      return d * d;
    case Form::rl:
      return d * std::log(d);
    case Form::rl_log1p:
      return d * std::log1p(d);
    case Form::rl_power:
      return std::pow(d, 1.0 + gamma);
  }
  return 0.0;
}

bool uses_weights(std::span<const Point> points) {
  return std::any_of(points.begin(), points.end(),
                     [](const Point& p) { return p.weight != 1.0; });
}

void check_points(std::span<const Point> points, std::size_t min_count, const char* who) {
  if (points.size() < min_count) {
    throw FitError(std::string(who) + ": need at least " + std::to_string(min_count) +
                   " points, got " + std::to_string(points.size()));
  }
  for (const auto& p : points) {
    if (!std::isfinite(p.d) || !std::isfinite(p.reward) || !(p.weight > 0.0) ||
        !std::isfinite(p.weight)) {
      throw FitError(std::string(who) + ": non-finite point or non-positive weight");
    }
  }
}

void check_origin(std::span<const Point> points, double d_floor, const char* who) {
  for (const auto& p : points) {
    if (!(p.d > d_floor)) {
      throw UsageError(std::string(who) + ": point at d=" + std::to_string(p.d) +
                       " is at or below the origin-exclusion floor " +
                       std::to_string(d_floor) + " (log forms have infinite slope at 0)");
    }
  }
}

double weighted_rmse(const FunctionalFit& fit, std::span<const Point> points) {
  double sum = 0.0;
  double weight = 0.0;
  for (const auto& p : points) {
    const double r = fit(p.d) - p.reward;
    sum += p.weight * r * r;
    weight += p.weight;
  }
  return std::sqrt(sum / weight);
}

void fill_range(FunctionalFit& fit, std::span<const Point> points) {
  const auto [lo, hi] = std::minmax_element(
      points.begin(), points.end(), [](const Point& a, const Point& b) { return a.d < b.d; });
  fit.d_min = lo->d;
  fit.d_max = hi->d;
  fit.point_count = static_cast<int>(points.size());
  fit.weights_used = uses_weights(points);
}

/// Two-parameter weighted linear least squares for `form` (gamma fixed).
FunctionalFit solve_linear(std::span<const Point> points, Form form, double gamma,
                           const char* who) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd target(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    const double sw = std::sqrt(p.weight);
    design(i, 0) = sw * p.d;
    design(i, 1) = -sw * penalty(form, p.d, gamma);
    target(i) = sw * p.reward;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-12);
  if (qr.rank() < 2) {
    throw FitError(std::string(who) + ": rank-deficient design (need two distinct d values)");
  }
  const Eigen::VectorXd coef = qr.solve(target);
  FunctionalFit fit;
  fit.form = form;
  fit.alpha = coef(0);
  fit.beta = coef(1);
  if (form == Form::rl_power) fit.gamma = gamma;
  fill_range(fit, points);
  fit.rmse = weighted_rmse(fit, points);
  return fit;
}

FunctionalFit fit_power(std::span<const Point> points) {
  auto objective = [&](double gamma) {
    try {
      return solve_linear(points, Form::rl_power, gamma, "fit_rl_power").rmse;
    } catch (const FitError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  // Coarse log-spaced grid locates the basin; golden section refines it.
  constexpr int kGrid = 41;
  std::vector<double> grid(kGrid);
  std::vector<double> values(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    grid[i] = kGammaMin * std::pow(kGammaMax / kGammaMin, static_cast<double>(i) / (kGrid - 1));
    values[i] = objective(grid[i]);
  }
  const auto best = static_cast<int>(std::min_element(values.begin(), values.end()) -
                                     values.begin());
  if (!std::isfinite(values[best])) {
    throw FitError("fit_rl_power: gamma search not bracketed (no finite objective on [" +
                   std::to_string(kGammaMin) + ", " + std::to_string(kGammaMax) + "])");
  }
  double lo = grid[std::max(best - 1, 0)];
  double hi = grid[std::min(best + 1, kGrid - 1)];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = objective(x1);
  double f2 = objective(x2);
  while (hi - lo > 1e-10 * std::max(1.0, std::abs(lo))) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = objective(x2);
    }
  }
  double gamma = 0.5 * (lo + hi);
  if (objective(gamma) > values[best]) gamma = grid[best];
  return solve_linear(points, Form::rl_power, gamma, "fit_rl_power");
}

}  // namespace

std::string_view to_string(Form form) {
  switch (form) {
    case Form::bon:
      return "bon";
    case Form::rl:
      return "rl";
    case Form::rl_log1p:
      return "rl_log1p";
    case Form::rl_power:
      return "rl_power";
  }
  return "?";
}

Form form_from_string(std::string_view name) {
  for (Form f : {Form::bon, Form::rl, Form::rl_log1p, Form::rl_power}) {
    if (to_string(f) == name) return f;
  }
  throw UsageError("unknown functional form '" + std::string(name) +
                   "' (expected bon, rl, rl_log1p or rl_power)");
}

double FunctionalFit::operator()(double d) const {
  if (d == 0.0) return 0.0;
  return alpha * d - beta * penalty(form, d, gamma.value_or(1.0));
}

FunctionalFit fit_bon(std::span<const Point> points) {
  check_points(points, 2, "fit_bon");
  return solve_linear(points, Form::bon, 0.0, "fit_bon");
}

FunctionalFit fit_rl(std::span<const Point> points, const RlOptions& options) {
  check_points(points, 2, "fit_rl");
  check_origin(points, options.d_floor, "fit_rl");
  if (!options.fixed_alpha) return solve_linear(points, Form::rl, 0.0, "fit_rl");

  // alpha held fixed: one-parameter least squares for beta.
  const double alpha = *options.fixed_alpha;
  double num = 0.0;
  double den = 0.0;
  for (const auto& p : points) {
    const double basis = penalty(Form::rl, p.d, 0.0);
    num += p.weight * basis * (alpha * p.d - p.reward);
    den += p.weight * basis * basis;
  }
  if (!(den > 0.0)) throw FitError("fit_rl: degenerate design for fixed-alpha fit");
  FunctionalFit fit;
  fit.form = Form::rl;
  fit.alpha = alpha;
  fit.beta = num / den;
  fill_range(fit, points);
  fit.rmse = weighted_rmse(fit, points);
  return fit;
}

FamilyFit fit_rl_family(std::span<const std::vector<Point>> traces, double d_floor) {
  if (traces.empty()) throw FitError("fit_rl_family: no traces");
  Eigen::Index rows = 0;
  for (const auto& trace : traces) {
    check_points(trace, 1, "fit_rl_family");
    check_origin(trace, d_floor, "fit_rl_family");
    rows += static_cast<Eigen::Index>(trace.size());
  }
  const auto k = static_cast<Eigen::Index>(traces.size());
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(rows, k + 1);
  Eigen::VectorXd target(rows);
  Eigen::Index row = 0;
  for (Eigen::Index t = 0; t < k; ++t) {
    for (const auto& p : traces[static_cast<std::size_t>(t)]) {
      const double sw = std::sqrt(p.weight);
      design(row, 0) = sw * p.d;
      design(row, t + 1) = -sw * penalty(Form::rl, p.d, 0.0);
      target(row) = sw * p.reward;
      ++row;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-12);
  if (qr.rank() < k + 1) throw FitError("fit_rl_family: rank-deficient joint design");
  const Eigen::VectorXd coef = qr.solve(target);
  FamilyFit out;
  out.alpha = coef(0);
  double sum = 0.0;
  double weight = 0.0;
  for (Eigen::Index t = 0; t < k; ++t) {
    out.betas.push_back(coef(t + 1));
    for (const auto& p : traces[static_cast<std::size_t>(t)]) {
      const double r = out.alpha * p.d - coef(t + 1) * penalty(Form::rl, p.d, 0.0) - p.reward;
      sum += p.weight * r * r;
      weight += p.weight;
    }
  }
  out.rmse = std::sqrt(sum / weight);
  return out;
}

AltFitResult fit_alt_rl_forms(std::span<const Point> points, Form form, double d_floor) {
  if (form == Form::bon) throw UsageError("fit_alt_rl_forms: bon is not an rl-style form");
  check_points(points, form == Form::rl_power ? 3 : 2, "fit_alt_rl_forms");
  check_origin(points, d_floor, "fit_alt_rl_forms");

  AltFitResult out;
  for (Form candidate : {Form::rl, Form::rl_log1p, Form::rl_power}) {
    FunctionalFit fit = candidate == Form::rl_power
                            ? (points.size() >= 3 ? fit_power(points) : FunctionalFit{})
                            : solve_linear(points, candidate, 0.0, "fit_alt_rl_forms");
    if (candidate == Form::rl_power && points.size() < 3) continue;
    out.candidate_rmse.emplace_back(candidate, fit.rmse);
    if (candidate == form) out.best = fit;
  }
  return out;
}

FunctionalFit fit_form(std::span<const Point> points, Form form, double d_floor) {
  switch (form) {
    case Form::bon:
      return fit_bon(points);
    case Form::rl:
      return fit_rl(points, RlOptions{d_floor, std::nullopt});
    case Form::rl_log1p:
    case Form::rl_power:
      return fit_alt_rl_forms(points, form, d_floor).best;
  }
  throw UsageError("fit_form: unknown form");
}

Peak predict_peak(const FunctionalFit& fit) {
  if (!(fit.beta > 0.0)) {
    throw DomainError("predict_peak: beta <= 0, the fitted curve has no maximum");
  }
  const double a = fit.alpha;
  const double b = fit.beta;
  Peak peak;
  switch (fit.form) {
    case Form::bon:
      peak.d_star = a / (2.0 * b);
      peak.r_star = a * a / (4.0 * b);
      break;
    case Form::rl:
      peak.d_star = std::exp(a / b - 1.0);
      peak.r_star = b * peak.d_star;
      break;
    case Form::rl_power: {
      const double g = fit.gamma.value_or(1.0);
      if (!(a > 0.0)) throw DomainError("predict_peak: alpha <= 0, no interior maximum");
      peak.d_star = std::pow(a / (b * (1.0 + g)), 1.0 / g);
      peak.r_star = peak.d_star * a * g / (1.0 + g);
      break;
    }
    case Form::rl_log1p: {
      if (!(a > 0.0)) throw DomainError("predict_peak: alpha <= 0, no interior maximum");
      // dR/dd = alpha - beta (ln(1+d) + d/(1+d)) is strictly decreasing.
      auto slope = [a, b](double d) { return a - b * (std::log1p(d) + d / (1.0 + d)); };
      double hi = 1.0;
      while (slope(hi) > 0.0) hi *= 2.0;
      boost::uintmax_t iters = 200;
      const auto [lo_d, hi_d] = boost::math::tools::toms748_solve(
          slope, 0.0, hi, boost::math::tools::eps_tolerance<double>(52), iters);
      peak.d_star = 0.5 * (lo_d + hi_d);
      peak.r_star = fit(peak.d_star);
      break;
    }
  }
  if (!(peak.d_star > 0.0)) {
    throw DomainError("predict_peak: stationary point is not at positive d");
  }
  return peak;
}

double iterated_rlhf_prediction(double alpha, double beta, double d, int k) {
  if (!(d > 0.0)) throw DomainError("iterated_rlhf_prediction: d must be positive");
  if (k < 1) throw DomainError("iterated_rlhf_prediction: k must be >= 1");
  if (beta < 0.0) throw DomainError("iterated_rlhf_prediction: beta must be >= 0");
  return d * (alpha - beta * std::log(d) + beta * std::log(static_cast<double>(k)));
}

TrendFit coefficient_trend_fit(std::span<const double> capacities,
                               std::span<const double> values) {
  if (capacities.size() != values.size()) {
    throw UsageError("coefficient_trend_fit: capacities and values differ in length");
  }
  const std::size_t n = capacities.size();
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(capacities[i] > 0.0)) throw DomainError("coefficient_trend_fit: capacity must be > 0");
    mean_x += std::log(capacities[i]);
    mean_y += values[i];
  }
  if (n < 2) throw FitError("coefficient_trend_fit: need at least two capacities");
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(capacities[i]) - mean_x;
    const double dy = values[i] - mean_y;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw FitError("coefficient_trend_fit: need two distinct capacities");
  TrendFit out;
  out.slope = sxy / sxx;
  out.intercept = mean_y - out.slope * mean_x;
  // Constant values are fit exactly.
  out.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return out;
}

double rmse_of(const FunctionalFit& fit, std::span<const Point> points) {
  if (points.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : points) {
    const double r = fit(p.d) - p.reward;
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(points.size()));
}

ExtrapolationResult extrapolation_check(std::span<const Point> points, double cutoff_d,
                                        Form form, double d_floor) {
  std::vector<Point> inside;
  std::vector<Point> outside;
  for (const auto& p : points) (p.d <= cutoff_d ? inside : outside).push_back(p);
  if (inside.size() < 2 || outside.size() < 2) {
    throw UsageError("extrapolation_check: need at least 2 points on each side of cutoff d=" +
                     std::to_string(cutoff_d) + " (have " + std::to_string(inside.size()) +
                     " below, " + std::to_string(outside.size()) + " above)");
  }
  ExtrapolationResult out;
  out.fit = fit_form(inside, form, d_floor);
  out.held_out_rmse = rmse_of(out.fit, outside);
  out.held_out_count = static_cast<int>(outside.size());
  return out;
}

}  // namespace overopt::fit

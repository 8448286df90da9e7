#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace overopt::fit {

// Functional forms for gold score R as a function of d = sqrt(KL):
//   bon       R = d (alpha - beta d)
//   rl        R = d (alpha - beta ln d)
//   rl_log1p  R = d (alpha - beta ln(1 + d))
//   rl_power  R = d (alpha - beta d^gamma)
enum class Form { bon, rl, rl_log1p, rl_power };

std::string_view to_string(Form form);
/// Throws UsageError for unknown names.
Form form_from_string(std::string_view name);

struct Point {
  double d = 0.0;
  double reward = 0.0;
  double weight = 1.0;
};

struct FunctionalFit {
  Form form = Form::bon;
  double alpha = 0.0;
  double beta = 0.0;
  std::optional<double> gamma;
  double rmse = 0.0;
  double d_min = 0.0;
  double d_max = 0.0;
  int point_count = 0;
  bool weights_used = false;

  double operator()(double d) const;
};

/// Points closer to the origin than this are rejected by the log forms, whose
/// slope is unbounded at d = 0.
inline constexpr double kDefaultDFloor = 1e-3;

struct RlOptions {
  double d_floor = kDefaultDFloor;
  std::optional<double> fixed_alpha;
};

/// Weighted least squares for the bon form (linear in alpha, beta).
/// Throws FitError on a rank-deficient design.
FunctionalFit fit_bon(std::span<const Point> points);

/// Weighted least squares for the rl form. Points with d <= d_floor are
/// rejected with a UsageError.
FunctionalFit fit_rl(std::span<const Point> points, const RlOptions& options = {});

/// Joint rl fit of several traces sharing one alpha (one beta per trace).
struct FamilyFit {
  double alpha = 0.0;
  std::vector<double> betas;
  double rmse = 0.0;
};
FamilyFit fit_rl_family(std::span<const std::vector<Point>> traces,
                        double d_floor = kDefaultDFloor);

struct AltFitResult {
  FunctionalFit best;
  /// RMSE of every rl-style candidate on the same points, for comparison.
  std::vector<std::pair<Form, double>> candidate_rmse;
};

/// Fits one of the rl-style forms. rl_power searches gamma in [0.01, 2]
/// (coarse grid, then golden-section on the bracketing cell) with a linear
/// inner solve for alpha, beta.
AltFitResult fit_alt_rl_forms(std::span<const Point> points, Form form,
                              double d_floor = kDefaultDFloor);

/// Dispatches to the fitter for `form`.
FunctionalFit fit_form(std::span<const Point> points, Form form,
                       double d_floor = kDefaultDFloor);

struct Peak {
  double d_star = 0.0;
  double r_star = 0.0;
};

/// Stationary point of the fitted curve. Throws DomainError when beta <= 0
/// or the curve has no interior maximum on d > 0.
Peak predict_peak(const FunctionalFit& fit);

/// Gold after k retrain-and-optimize rounds each covering d/k, assuming
/// additivity of d across rounds: d (alpha - beta ln d + beta ln k).
double iterated_rlhf_prediction(double alpha, double beta, double d, int k);

struct TrendFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Least squares of value against ln(capacity).
TrendFit coefficient_trend_fit(std::span<const double> capacities,
                               std::span<const double> values);

struct ExtrapolationResult {
  FunctionalFit fit;
  double held_out_rmse = 0.0;
  int held_out_count = 0;
};

/// Fits on d <= cutoff_d and scores the fit on d > cutoff_d.
/// Requires at least two points on each side (UsageError otherwise).
ExtrapolationResult extrapolation_check(std::span<const Point> points, double cutoff_d,
                                        Form form, double d_floor = kDefaultDFloor);

/// Unweighted RMSE of `fit` over `points`.
double rmse_of(const FunctionalFit& fit, std::span<const Point> points);

}  // namespace overopt::fit

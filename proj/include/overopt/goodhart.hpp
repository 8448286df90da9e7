#pragma once

#include <cstdint>
#include <variant>

namespace overopt::goodhart {

// Regressional Goodhart: a proxy X^ = X + Z built from the true signal X and
// independent noise Z. Selecting on the proxy splits optimization power
// between signal and noise in proportion to their variances.

struct NormalDist {
  double mean = 0.0;
  double sd = 1.0;
};

/// Uniform on (lo, hi). Used as the bounded-noise family.
struct UniformDist {
  double lo = -1.0;
  double hi = 1.0;
};

using Distribution = std::variant<NormalDist, UniformDist>;

double mean_of(const Distribution& dist);
double variance_of(const Distribution& dist);

/// E[X | X + Z = c] under the linear (Gaussian) regression identity:
/// mean_x + (c - mean_x - mean_z) * var_x / (var_x + var_z).
/// Throws DomainError when var_x <= 0 or var_z < 0.
double conditional_mean(double mean_x, double var_x, double mean_z, double var_z,
                        double c);

struct McEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::uint64_t accepted = 0;
};

/// Rejection estimate of E[X | X + Z in (c - w, c + w)].
///
/// When Z is bounded the only X values that can ever be accepted lie in
/// (c - w - sup Z, c + w - inf Z); X is then drawn from its law restricted to
/// that interval (itself by exact rejection), which leaves the conditional
/// law unchanged and raises the acceptance rate.
///
/// Preconditions: window_halfwidth > 0, sample_count >= 1e4.
/// Throws NumericalError if no proposal is accepted.
McEstimate mc_conditional_mean(const Distribution& dist_x, const Distribution& dist_z,
                               double c, double window_halfwidth,
                               std::uint64_t sample_count, std::uint64_t seed);

struct QuadratureConfig {
  double abs_tolerance = 1e-8;
  unsigned max_depth = 20;
};

/// E[max of n i.i.d. standard normals], by adaptive Gauss-Kronrod quadrature
/// of x * n * phi(x) * Phi(x)^(n-1) over the real line.
double expected_max_standard_normal(unsigned n, const QuadratureConfig& config = {});

/// Expected gold value X of the best-of-n draw when selecting on X + Z with
/// X ~ N(0, var_x), Z ~ N(0, var_z):
/// E[max_n N(0, var_x + var_z)] * var_x / (var_x + var_z).
double bon_gold_under_noise(unsigned n, double var_x, double var_z,
                            const QuadratureConfig& config = {});

/// Brute-force simulation of the quantity above: `trials` independent rounds
/// of n draws each, keeping X of the argmax of X + Z.
McEstimate simulate_bon_gold_under_noise(unsigned n, double var_x, double var_z,
                                         std::uint64_t trials, std::uint64_t seed);

}  // namespace overopt::goodhart

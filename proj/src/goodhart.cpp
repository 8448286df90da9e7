#include "overopt/goodhart.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "overopt/error.hpp"
#include "overopt/random.hpp"

namespace overopt::goodhart {
namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
};

Interval support_of(const Distribution& dist) {
  if (const auto* u = std::get_if<UniformDist>(&dist)) return {u->lo, u->hi};
  return {};
}

void validate(const Distribution& dist, const char* name) {
  if (const auto* n = std::get_if<NormalDist>(&dist)) {
    if (!(n->sd > 0.0) || !std::isfinite(n->mean))
      throw DomainError(std::string(name) + ": normal sd must be positive");
  } else {
    const auto& u = std::get<UniformDist>(dist);
    if (!(u.hi > u.lo)) throw DomainError(std::string(name) + ": uniform needs lo < hi");
  }
}

/// Draws from `dist` conditioned on `region`. For a normal law restricted to
/// a finite interval this is a uniform proposal accepted with probability
/// pdf(x) / max pdf on the interval.
class RestrictedSampler {
 public:
  RestrictedSampler(const Distribution& dist, Interval region) : dist_(dist) {
    const Interval support = support_of(dist);
    region_.lo = std::max(region.lo, support.lo);
    region_.hi = std::min(region.hi, support.hi);
    if (const auto* n = std::get_if<NormalDist>(&dist_); n && region_.bounded()) {
      const double zlo = (region_.lo - n->mean) / n->sd;
      const double zhi = (region_.hi - n->mean) / n->sd;
      const double zpeak = std::clamp(0.0, zlo, zhi);
      log_peak_ = -0.5 * zpeak * zpeak;
    }
  }

  bool empty() const { return !(region_.hi > region_.lo); }

  double draw(Rng& rng) const {
    if (const auto* n = std::get_if<NormalDist>(&dist_)) {
      if (!region_.bounded()) {
        // Unrestricted normal; a half-bounded region only arises with
        // unbounded noise, where no restriction is applied.
        return n->mean + n->sd * rng.normal();
      }
      for (;;) {
        const double x = rng.uniform(region_.lo, region_.hi);
        const double z = (x - n->mean) / n->sd;
        if (std::log(rng.uniform_open()) <= -0.5 * z * z - log_peak_) return x;
      }
    }
    return rng.uniform(region_.lo, region_.hi);
  }

 private:
  Distribution dist_;
  Interval region_;
  double log_peak_ = 0.0;
};

}  // namespace

double mean_of(const Distribution& dist) {
  if (const auto* n = std::get_if<NormalDist>(&dist)) return n->mean;
  const auto& u = std::get<UniformDist>(dist);
  return 0.5 * (u.lo + u.hi);
}

double variance_of(const Distribution& dist) {
  if (const auto* n = std::get_if<NormalDist>(&dist)) return n->sd * n->sd;
  const auto& u = std::get<UniformDist>(dist);
  return (u.hi - u.lo) * (u.hi - u.lo) / 12.0;
}

double conditional_mean(double mean_x, double var_x, double mean_z, double var_z,
                        double c) {
  if (!(var_x > 0.0)) throw DomainError("conditional_mean: var_x must be positive");
  if (!(var_z >= 0.0)) throw DomainError("conditional_mean: var_z must be non-negative");
  return mean_x + (c - mean_x - mean_z) * var_x / (var_x + var_z);
}

McEstimate mc_conditional_mean(const Distribution& dist_x, const Distribution& dist_z,
                               double c, double window_halfwidth,
                               std::uint64_t sample_count, std::uint64_t seed) {
  validate(dist_x, "dist_x");
  validate(dist_z, "dist_z");
  if (!(window_halfwidth > 0.0))
    throw DomainError("mc_conditional_mean: window half-width must be positive");
  if (sample_count < 10'000)
    throw DomainError("mc_conditional_mean: sample_count must be at least 10^4");

  Interval x_region;
  if (const Interval z_support = support_of(dist_z); z_support.bounded()) {
    x_region = {c - window_halfwidth - z_support.hi, c + window_halfwidth - z_support.lo};
  }
  const RestrictedSampler x_sampler(dist_x, x_region);
  const RestrictedSampler z_sampler(dist_z, Interval{});

  McEstimate out;
  if (!x_sampler.empty()) {
    Rng rng(seed);
    // Welford accumulation of the accepted X values.
    double mean = 0.0;
    double m2 = 0.0;
    for (std::uint64_t i = 0; i < sample_count; ++i) {
      const double x = x_sampler.draw(rng);
      const double z = z_sampler.draw(rng);
      if (std::abs(x + z - c) < window_halfwidth) {
        ++out.accepted;
        const double delta = x - mean;
        mean += delta / static_cast<double>(out.accepted);
        m2 += delta * (x - mean);
      }
    }
    out.estimate = mean;
    if (out.accepted > 1) {
      const auto k = static_cast<double>(out.accepted);
      out.standard_error = std::sqrt(m2 / (k - 1.0) / k);
    }
  }
  if (out.accepted == 0) {
    throw NumericalError("mc_conditional_mean: no samples fell in the window (c=" +
                         std::to_string(c) + ", w=" + std::to_string(window_halfwidth) +
                         "); try a larger window half-width");
  }
  return out;
}

double expected_max_standard_normal(unsigned n, const QuadratureConfig& config) {
  if (n < 1) throw DomainError("expected_max_standard_normal: n must be >= 1");
  if (n == 1) return 0.0;
  const double nn = static_cast<double>(n);
  auto integrand = [nn](double x) {
    const double cdf = normal_cdf(x);
    if (cdf <= 0.0) return 0.0;
    return x * nn * normal_pdf(x) * std::exp((nn - 1.0) * std::log(cdf));
  };
  double error = 0.0;
  // The integrand is negligible outside [-40, 40] for any n representable in
  // an unsigned: the mode of the max of n normals sits below sqrt(2 ln n) < 7.
  const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, -40.0, 40.0, config.max_depth, 1e-14, &error);
  if (!std::isfinite(value) || error > config.abs_tolerance) {
    throw NumericalError("expected_max_standard_normal: quadrature did not converge (n=" +
                         std::to_string(n) + ", error estimate " + std::to_string(error) +
                         ")");
  }
  return value;
}

double bon_gold_under_noise(unsigned n, double var_x, double var_z,
                            const QuadratureConfig& config) {
  if (n < 1) throw DomainError("bon_gold_under_noise: n must be >= 1");
  if (!(var_x > 0.0)) throw DomainError("bon_gold_under_noise: var_x must be positive");
  if (!(var_z >= 0.0)) throw DomainError("bon_gold_under_noise: var_z must be non-negative");
  const double total = var_x + var_z;
  return expected_max_standard_normal(n, config) * std::sqrt(total) * (var_x / total);
}

McEstimate simulate_bon_gold_under_noise(unsigned n, double var_x, double var_z,
                                         std::uint64_t trials, std::uint64_t seed) {
  if (n < 1 || trials < 2) throw DomainError("simulate_bon_gold_under_noise: bad size");
  const double sd_x = std::sqrt(var_x);
  const double sd_z = std::sqrt(var_z);
  Rng rng(seed);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    double best_proxy = -std::numeric_limits<double>::infinity();
    double best_x = 0.0;
    for (unsigned i = 0; i < n; ++i) {
      const double x = sd_x * rng.normal();
      const double proxy = x + sd_z * rng.normal();
      if (proxy > best_proxy) {
        best_proxy = proxy;
        best_x = x;
      }
    }
    const double delta = best_x - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta * (best_x - mean);
  }
  const auto k = static_cast<double>(trials);
  return {mean, std::sqrt(m2 / (k - 1.0) / k), trials};
}

}  // namespace overopt::goodhart

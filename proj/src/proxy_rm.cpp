#include "overopt/proxy_rm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/tools/toms748_solve.hpp>
#include <cmath>
#include <numeric>
#include <string>

#include "overopt/error.hpp"
#include "overopt/random.hpp"

namespace overopt::proxy {
namespace {

using labeling::Comparison;
using labeling::ComparisonDataset;

constexpr std::uint64_t kMaskStream = 0x6d61736b;

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double record_delta(const RewardModel& rm, const World& world, const Comparison& r) {
  return rm.score(world.features(r.context, r.outcome_a)) -
         rm.score(world.features(r.context, r.outcome_b));
}

double hard_loss(std::span<const Comparison> records, const RewardModel& rm, const World& world) {
  double total = 0.0;
  for (const auto& r : records) {
    const double logit = rm.preference_logit(record_delta(rm, world, r), 0.0);
    total += r.a_preferred ? softplus(-logit) : softplus(logit);
  }
  return total / static_cast<double>(records.size());
}

double soft_loss_at(std::span<const double> deltas, std::span<const double> soft, double u) {
  double total = 0.0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const double z = u * deltas[i];
    total += soft[i] * softplus(-z) + (1.0 - soft[i]) * softplus(z);
  }
  return total / static_cast<double>(deltas.size());
}

double soft_slope_at(std::span<const double> deltas, std::span<const double> soft, double u) {
  double total = 0.0;
  for (std::size_t i = 0; i < deltas.size(); ++i)
    total += deltas[i] * (labeling::sigmoid(u * deltas[i]) - soft[i]);
  return total / static_cast<double>(deltas.size());
}

}  // namespace

nlohmann::json TrainConfig::to_json() const {
  return {{"l2", l2},
          {"grad_tolerance", grad_tolerance},
          {"epochs", epochs},
          {"steps_per_epoch", steps_per_epoch},
          {"mask_seed", mask_seed}};
}

std::vector<int> feature_order(int features, std::uint64_t mask_seed) {
  std::vector<int> order(static_cast<std::size_t>(features));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(mask_seed, kMaskStream);
  rng.shuffle(std::span<int>(order));
  return order;
}

std::vector<int> feature_mask(int features, int capacity, std::uint64_t mask_seed) {
  if (capacity < 0 || capacity > features)
    throw DomainError("feature_mask: capacity must be in [0, " + std::to_string(features) + "]");
  std::vector<int> order = feature_order(features, mask_seed);
  order.resize(static_cast<std::size_t>(capacity));
  std::sort(order.begin(), order.end());
  return order;
}

RewardModel train_proxy(const ComparisonDataset& dataset, const World& world, int capacity,
                        const TrainConfig& config) {
  if (dataset.train_count == 0) throw UsageError("train_proxy: empty train split");
  if (!(config.l2 >= 0.0) || !(config.grad_tolerance > 0.0) || config.epochs < 1 ||
      config.steps_per_epoch < 1)
    throw DomainError("train_proxy: invalid train config");

  const int F = world.feature_count();
  RewardModel rm;
  rm.weights.assign(static_cast<std::size_t>(F), 0.0);
  rm.feature_mask = feature_mask(F, capacity, config.mask_seed);
  const auto train = dataset.train();
  const auto n = static_cast<Eigen::Index>(train.size());
  const auto k = static_cast<Eigen::Index>(capacity);

  // Differences of masked features, columns rescaled to unit RMS.
  Eigen::MatrixXd Z(n, k);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = train[static_cast<std::size_t>(i)];
    const auto fa = world.features(r.context, r.outcome_a);
    const auto fb = world.features(r.context, r.outcome_b);
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto f = static_cast<std::size_t>(rm.feature_mask[static_cast<std::size_t>(j)]);
      Z(i, j) = fa[f] - fb[f];
    }
    y(i) = r.a_preferred ? 1.0 : 0.0;
  }
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double rms = std::sqrt(Z.col(j).squaredNorm() / static_cast<double>(n));
    if (rms > 0.0) scale(j) = rms;
    Z.col(j) /= scale(j);
  }
  const Eigen::VectorXd penalty = (2.0 * config.l2) * scale.array().square().inverse().matrix();

  Eigen::VectorXd v = Eigen::VectorXd::Zero(k);
  long iterations = 0;
  double grad_norm = 0.0;
  double loss = std::log(2.0);
  bool converged = k == 0;
  if (k > 0) {
    const Eigen::MatrixXd gram = Z.transpose() * Z / static_cast<double>(n);
    const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .maxCoeff();
    const double step = 1.0 / (0.25 * lmax + penalty.maxCoeff());
    const long cap = static_cast<long>(config.epochs) * config.steps_per_epoch;
    Eigen::VectorXd margin(n), resid(n), grad(k);
    for (iterations = 0;; ++iterations) {
      margin.noalias() = Z * v;
      double total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        total += y(i) > 0.5 ? softplus(-margin(i)) : softplus(margin(i));
        resid(i) = labeling::sigmoid(margin(i)) - y(i);
      }
      loss = total / static_cast<double>(n);
      if (!std::isfinite(loss))
        throw NumericalError("train_proxy: non-finite loss at iteration " + std::to_string(iterations));
      grad.noalias() = Z.transpose() * resid / static_cast<double>(n);
      grad += penalty.cwiseProduct(v);
      grad_norm = grad.norm();
      if (grad_norm <= config.grad_tolerance) {
        converged = true;
        break;
      }
      if (iterations >= cap) break;
      v -= step * grad;
    }
  }
  for (Eigen::Index j = 0; j < k; ++j)
    rm.weights[static_cast<std::size_t>(rm.feature_mask[static_cast<std::size_t>(j)])] = v(j) / scale(j);

  rm.training = config.to_json();
  rm.training["capacity"] = capacity;
  rm.training["train_pairs"] = train.size();
  rm.training["dataset_seed"] = dataset.seed;
  rm.training["iterations"] = iterations;
  rm.training["grad_norm"] = grad_norm;
  rm.training["converged"] = converged;
  rm.training["train_loss"] = loss;
  return rm;
}

double validation_loss(const RewardModel& rm, const World& world, const ComparisonDataset& dataset) {
  if (dataset.holdout().empty()) throw UsageError("validation_loss: empty holdout split");
  return hard_loss(dataset.holdout(), rm, world);
}

double training_loss(const RewardModel& rm, const World& world, const ComparisonDataset& dataset) {
  if (dataset.train().empty()) throw UsageError("training_loss: empty train split");
  return hard_loss(dataset.train(), rm, world);
}

double soft_label_loss(const RewardModel& rm, const World& world, const ComparisonDataset& dataset) {
  if (dataset.holdout().empty()) throw UsageError("soft_label_loss: empty holdout split");
  double total = 0.0;
  for (const auto& r : dataset.holdout()) {
    const double z = rm.preference_logit(record_delta(rm, world, r), 0.0);
    total += r.soft_label * softplus(-z) + (1.0 - r.soft_label) * softplus(z);
  }
  return total / static_cast<double>(dataset.holdout().size());
}

RewardModel recalibrate(const RewardModel& rm, const World& world, const ComparisonDataset& dataset) {
  const auto holdout = dataset.holdout();
  if (holdout.empty()) throw UsageError("recalibrate: empty holdout split");
  std::vector<double> deltas, soft;
  deltas.reserve(holdout.size());
  soft.reserve(holdout.size());
  bool any_nonzero = false;
  for (const auto& r : holdout) {
    deltas.push_back(record_delta(rm, world, r));
    soft.push_back(r.soft_label);
    any_nonzero = any_nonzero || deltas.back() != 0.0;
  }
  if (!any_nonzero)
    throw NumericalError("recalibrate: all score differences are zero; temperature unidentifiable");

  // Optimize u = 1/t; the loss is convex in u with increasing slope.
  auto slope = [&](double u) { return soft_slope_at(deltas, soft, u); };
  if (slope(0.0) >= 0.0)
    throw NumericalError("recalibrate: scores do not agree with soft labels (optimal 1/t <= 0)");
  double lo = 0.0, hi = 1.0;
  int doublings = 0;
  while (slope(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 1000)
      throw NumericalError("recalibrate: optimum at t -> 0 (separable soft labels)");
  }
  double u = hi;
  if (slope(hi) != 0.0) {
    auto tol = [](double a, double b) { return a > 0.0 && 1.0 / a - 1.0 / b <= 1e-11; };
    std::uintmax_t max_iter = 500;
    const auto [a, b] =
        boost::math::tools::toms748_solve(slope, lo, hi, slope(lo), slope(hi), tol, max_iter);
    u = 0.5 * (a + b);
  }
  RewardModel out = rm;
  out.calibration_temperature = 1.0 / u;
  const double before = soft_loss_at(deltas, soft, 1.0 / rm.calibration_temperature);
  const double after = soft_loss_at(deltas, soft, u);
  if (after > before) out.calibration_temperature = rm.calibration_temperature;
  return out;
}

RewardModel normalize(const RewardModel& rm, const World& world, const Policy& initial,
                      bool unit_variance) {
  RewardModel unit = rm;
  unit.score_shift = 0.0;
  unit.score_scale = 1.0;
  const std::vector<double> raw = score_table(world, unit);
  const Moments first = policy_moments(initial, raw);
  std::vector<double> centered(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) centered[i] = raw[i] - first.mean;
  const Moments second = policy_moments(initial, centered);

  RewardModel out = rm;
  out.score_shift = first.mean + second.mean;
  if (unit_variance) {
    if (!(second.variance > 0.0))
      throw NumericalError("normalize: zero score variance under the initial policy");
    out.score_scale = 1.0 / std::sqrt(second.variance);
  }
  out.normalized = true;
  return out;
}

double accuracy(const RewardModel& rm, const World& world, const ComparisonDataset& dataset) {
  const auto holdout = dataset.holdout();
  if (holdout.empty()) throw UsageError("accuracy: empty holdout split");
  double hits = 0.0;
  for (const auto& r : holdout) {
    const double delta = record_delta(rm, world, r);
    if (delta == 0.0)
      hits += 0.5;
    else if ((delta > 0.0) == r.a_preferred)
      hits += 1.0;
  }
  return hits / static_cast<double>(holdout.size());
}

RewardModel normalized_gold(const World& world, const Policy& initial) {
  return normalize(gold_model(world), world, initial, true);
}

}  // namespace overopt::proxy

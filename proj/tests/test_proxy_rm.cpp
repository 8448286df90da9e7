#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "overopt/error.hpp"
#include "overopt/labeling.hpp"
#include "overopt/proxy_rm.hpp"

using namespace overopt;
using namespace overopt::proxy;
using labeling::ComparisonDataset;

namespace {

World line_world() {
  WorldConfig cfg;
  cfg.contexts = 1;
  cfg.outcomes = 40;
  cfg.features = 2;
  cfg.seed = 11;
  cfg.gold_weights = std::vector<double>{1, 0};
  return build_world(cfg);
}

RewardModel first_feature_rm() {
  RewardModel rm;
  rm.weights = {1, 0};
  rm.feature_mask = {0};
  return rm;
}

// Holdout of all ordered pairs with soft labels sigmoid(delta / t).
ComparisonDataset soft_pairs(const World& w, double t) {
  ComparisonDataset ds;
  for (int a = 0; a < w.outcomes(); ++a)
    for (int b = 0; b < w.outcomes(); ++b) {
      if (a == b) continue;
      const double delta = w.features(0, a)[0] - w.features(0, b)[0];
      ds.records.push_back({0, a, b, delta > 0, labeling::sigmoid(delta / t)});
    }
  ds.train_count = 0;
  return ds;
}

double grid_best_temperature(const RewardModel& rm, const World& w, const ComparisonDataset& ds) {
  double best_t = 0.0, best = INFINITY;
  for (double t = 0.05; t <= 5.0; t += 0.0005) {
    RewardModel c = rm;
    c.calibration_temperature = t;
    const double loss = soft_label_loss(c, w, ds);
    if (loss < best) best = loss, best_t = t;
  }
  return best_t;
}

}  // namespace

TEST_CASE("feature masks are nested and seed-fixed") {
  const auto order = feature_order(16, 3);
  CHECK(order.size() == 16);
  CHECK(std::is_permutation(order.begin(), order.end(), [] {
    std::vector<int> v(16);
    for (int i = 0; i < 16; ++i) v[i] = i;
    return v;
  }().begin()));
  for (int k = 0; k < 16; ++k) {
    const auto small = feature_mask(16, k, 3), big = feature_mask(16, k + 1, 3);
    CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));
  }
  CHECK(feature_order(16, 3) == order);
  CHECK(feature_order(16, 4) != order);
  CHECK_THROWS_AS(feature_mask(16, 17, 0), DomainError);
  CHECK_THROWS_AS(feature_mask(16, -1, 0), DomainError);
}

TEST_CASE("capacity zero is the constant model") {
  const World w = build_world(testing_helpers::small_config());
  const Policy init = initial_policy(w, 1.0);
  const RewardModel gold = normalized_gold(w, init);
  const auto ds = labeling::generate_comparisons(w, gold, init, 500, 0.2, 1);
  const RewardModel rm = train_proxy(ds, w, 0, TrainConfig{});
  CHECK(validation_loss(rm, w, ds) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(accuracy(rm, w, ds) == 0.5);
  CHECK(rm.training["converged"] == true);
  CHECK_THROWS_AS(recalibrate(rm, w, ds), NumericalError);
}

TEST_CASE("accuracy of perfect, reversed and constant scorers") {
  const World w = line_world();
  const Policy init = initial_policy(w, 1.0);
  const RewardModel gold = normalized_gold(w, init);
  const auto ds = labeling::generate_comparisons(w, gold, init, 300, 0.5, 2);
  RewardModel rm = first_feature_rm();
  CHECK(accuracy(rm, w, ds) == 1.0);
  rm.weights = {-1, 0};
  CHECK(accuracy(rm, w, ds) == 0.0);
  rm.weights = {0, 0};
  CHECK(accuracy(rm, w, ds) == 0.5);
}

TEST_CASE("full capacity on a noise-free world ranks almost every pair") {
  const World w = build_world(testing_helpers::small_config(4, 64, 6, 21));
  const Policy init = initial_policy(w, 1.0);
  const RewardModel gold = normalized_gold(w, init);
  const auto ds = labeling::generate_comparisons(w, gold, init, 50000, 0.1, 5);
  const RewardModel rm = train_proxy(ds, w, 6, TrainConfig{});
  CHECK(accuracy(rm, w, ds) >= 0.99);
  const auto scores = score_table(w, rm);
  long agree = 0, total = 0;
  for (int c = 0; c < w.contexts(); ++c)
    for (int a = 0; a < w.outcomes(); ++a)
      for (int b = a + 1; b < w.outcomes(); ++b) {
        const double dg = gold_score(w, gold, c, a) - gold_score(w, gold, c, b);
        const double dp = scores[w.index(c, a)] - scores[w.index(c, b)];
        agree += (dg > 0) == (dp > 0);
        ++total;
      }
  CHECK(static_cast<double>(agree) / total >= 0.99);
}

TEST_CASE("training diagnostics and determinism") {
  const World w = build_world(testing_helpers::small_config());
  const Policy init = initial_policy(w, 1.0);
  const RewardModel gold = normalized_gold(w, init);
  const auto ds = labeling::generate_comparisons(w, gold, init, 2000, 0.1, 4);
  const RewardModel a = train_proxy(ds, w, 3, TrainConfig{});
  const RewardModel b = train_proxy(ds, w, 3, TrainConfig{});
  CHECK(a.weights == b.weights);
  CHECK(a.training["capacity"] == 3);
  CHECK(a.training["train_pairs"] == 1800);
  CHECK(a.training.contains("grad_norm"));
  CHECK(a.feature_mask.size() == 3);
  for (int f = 0; f < 6; ++f)
    if (!std::binary_search(a.feature_mask.begin(), a.feature_mask.end(), f)) CHECK(a.weights[f] == 0.0);
  CHECK(training_loss(a, w, ds) < std::log(2.0));
}

TEST_CASE("recalibration recovers the generating temperature") {
  const World w = line_world();
  for (double t : {1.0, 2.0, 0.5}) {
    const auto ds = soft_pairs(w, t);
    const RewardModel out = recalibrate(first_feature_rm(), w, ds);
    CHECK(out.calibration_temperature == doctest::Approx(t).epsilon(1e-8));
    CHECK(std::abs(out.calibration_temperature - grid_best_temperature(first_feature_rm(), w, ds)) < 1e-3);
    CHECK(soft_label_loss(out, w, ds) <= soft_label_loss(first_feature_rm(), w, ds) + 1e-15);
  }
}

TEST_CASE("recalibration never worsens the soft loss") {
  const World w = build_world(testing_helpers::small_config(4, 64, 6, 8));
  const Policy init = initial_policy(w, 1.0);
  const RewardModel gold = normalized_gold(w, init);
  const auto ds = labeling::generate_comparisons(w, gold, init, 3000, 0.3, 9);
  const RewardModel rm = train_proxy(ds, w, 2, TrainConfig{});
  const RewardModel cal = recalibrate(rm, w, ds);
  CHECK(soft_label_loss(cal, w, ds) <= soft_label_loss(rm, w, ds));
  CHECK(std::abs(cal.calibration_temperature - grid_best_temperature(rm, w, ds)) < 2e-3);
}

TEST_CASE("normalize centers, is idempotent and keeps rankings") {
  const World w = build_world(testing_helpers::small_config());
  const Policy init = initial_policy(w, 1.0);
  RewardModel rm;
  rm.weights = {0.3, -1.2, 0, 2.0, 0, 0};
  rm.feature_mask = {0, 1, 3};
  rm.bias = 4.0;
  const RewardModel once = normalize(rm, w, init, false);
  const RewardModel twice = normalize(once, w, init, false);
  CHECK(once.normalized);
  CHECK(once.score_shift == twice.score_shift);
  CHECK(once.score_scale == twice.score_scale);
  const auto s = score_table(w, once);
  CHECK(std::abs(policy_moments(init, s).mean) < 1e-12);
  const auto raw = score_table(w, rm);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK((raw[i] > raw[i - 1]) == (s[i] > s[i - 1]));

  const RewardModel unit = normalize(rm, w, init, true);
  const auto us = score_table(w, unit);
  CHECK(policy_moments(init, us).variance == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(normalize(unit, w, init, true).score_scale == unit.score_scale);

  RewardModel flat;
  flat.weights.assign(6, 0.0);
  CHECK_THROWS_AS(normalize(flat, w, init, true), NumericalError);
}

TEST_CASE("more data lowers holdout loss") {
  const World w = build_world(testing_helpers::small_config(8, 128, 8, 2));
  const Policy init = initial_policy(w, 1.0);
  const RewardModel gold = normalized_gold(w, init);
  const auto eval = labeling::generate_comparisons(w, gold, init, 20000, 0.99, 777);
  double small = 0.0, large = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig cfg;
    cfg.mask_seed = 1;
    for (std::size_t n : {200u, 3200u}) {
      const auto ds = labeling::generate_comparisons(w, gold, init, n, 0.0, 100 + seed);
      const RewardModel rm = train_proxy(ds, w, 8, cfg);
      (n == 200 ? small : large) += validation_loss(rm, w, eval);
    }
  }
  CHECK(large < small);
}

TEST_CASE("training errors") {
  const World w = build_world(testing_helpers::small_config());
  ComparisonDataset empty;
  CHECK_THROWS_AS(train_proxy(empty, w, 2, TrainConfig{}), UsageError);
  CHECK_THROWS_AS(validation_loss(first_feature_rm(), line_world(), empty), UsageError);
}

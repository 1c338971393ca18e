/* Copyright (c) 2026 The mbem Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "mbem/learn.hpp"
#include "mbem/simulate.hpp"
#include "test_util.hpp"

using namespace mbem;

namespace {

// Small random problem for gradient checks: n <= 32, d <= 8, random soft labels.
struct SmallProblem {
  Matrix features;
  SoftLabels soft;
};

SmallProblem small_problem(Rng& rng, std::size_t K) {
  const std::size_t n = 4 + rng.uniform_int(29);
  const std::size_t d = 1 + rng.uniform_int(8);
  SmallProblem p{Matrix(n, d), SoftLabels{Matrix(n, K)}};
  for (double& x : p.features.data()) x = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (double& w : p.soft.rows.row(i)) sum += (w = rng.uniform());
    for (double& w : p.soft.rows.row(i)) w /= sum;
  }
  return p;
}

}  // namespace

TEST(WeightedLoss, OneHotIsCrossEntropy) {
  const std::vector<double> p{0.1, 0.6, 0.3};
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> w(3, 0.0);
    w[k] = 1.0;
    EXPECT_EQ(weighted_loss(p, w), -std::log(p[k]));
  }
}

TEST(WeightedLoss, HandExample) {
  EXPECT_NEAR(weighted_loss(std::vector<double>{0.9, 0.1}, std::vector<double>{0.5, 0.5}), 1.203973, 5e-7);
}

TEST(WeightedLoss, UniformWeightsArePermutationSymmetric) {
  const std::vector<double> w(3, 1.0 / 3.0);
  const double base = weighted_loss(std::vector<double>{0.2, 0.5, 0.3}, w);
  EXPECT_DOUBLE_EQ(weighted_loss(std::vector<double>{0.5, 0.3, 0.2}, w), base);
  EXPECT_DOUBLE_EQ(weighted_loss(std::vector<double>{0.3, 0.2, 0.5}, w), base);
}

TEST(WeightedLoss, ClampsZeroProbability) {
  EXPECT_NEAR(weighted_loss(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}), -std::log(1e-12), 1e-9);
}

TEST(PredictProba, ZeroModelIsUniform) {
  for (auto kind : {LearnerKind::kLogistic, LearnerKind::kMlp}) {
    const auto model = zero_model(kind, 4, 3, 5);
    Matrix x(6, 3);
    Rng rng({1, 0});
    for (double& v : x.data()) v = rng.normal();
    const Matrix p = predict_proba(model, x);
    for (double v : p.data()) EXPECT_DOUBLE_EQ(v, 0.25);
  }
}

TEST(PredictProba, LogisticHandExample) {
  // W = [[1, -1], [0.5, 2]], b = [0.1, -0.2], x = (0.3, 0.4): logits (0, 0.75).
  TrainedModel model{LearnerKind::kLogistic, 2, 2, 0, {1.0, -1.0, 0.5, 2.0, 0.1, -0.2}};
  Matrix x(1, 2);
  x(0, 0) = 0.3;
  x(0, 1) = 0.4;
  const Matrix p = predict_proba(model, x);
  const double e = 2.1170000166126748;  // exp(0.75)
  EXPECT_NEAR(p(0, 0), 1.0 / (1.0 + e), 1e-15);
  EXPECT_NEAR(p(0, 1), e / (1.0 + e), 1e-15);
}

TEST(PredictProba, RowsOnSimplexForRandomModels) {
  Rng rng({2, 0});
  for (auto kind : {LearnerKind::kLogistic, LearnerKind::kMlp}) {
    LearnerConfig cfg;
    cfg.kind = kind;
    const auto model = random_model(cfg, 5, 6, 3.0, {2, static_cast<std::uint64_t>(kind)});
    Matrix x(50, 6);
    for (double& v : x.data()) v = 5.0 * rng.normal();
    testutil::expect_row_stochastic(predict_proba(model, x));
  }
}

TEST(PredictProba, DimensionMismatch) {
  EXPECT_THROW(predict_proba(zero_model(LearnerKind::kLogistic, 2, 3), Matrix(2, 4)), Error);
}

TEST(GradientCheck, Logistic) {
  Rng rng({3, 0});
  LearnerConfig cfg;
  cfg.l2_penalty = 0.01;
  for (std::uint64_t t = 0; t < 10; ++t) {
    const auto p = small_problem(rng, 2 + t % 4);
    EXPECT_LE(gradient_check(cfg, p.features, p.soft, {3, t}), 1e-5);
  }
}

TEST(GradientCheck, Mlp) {
  Rng rng({4, 0});
  LearnerConfig cfg;
  cfg.kind = LearnerKind::kMlp;
  cfg.hidden_units = 6;
  cfg.l2_penalty = 0.01;
  for (std::uint64_t t = 0; t < 10; ++t) {
    const auto p = small_problem(rng, 2 + t % 4);
    EXPECT_LE(gradient_check(cfg, p.features, p.soft, {4, t}), 1e-4);
  }
}

TEST(GradientCheck, BiasGradientVanishesAtZeroWithUniformTargets) {
  Rng rng({5, 0});
  auto p = small_problem(rng, 3);
  for (double& w : p.soft.rows.data()) w = 1.0 / 3.0;
  const auto model = zero_model(LearnerKind::kLogistic, 3, p.features.cols());
  std::vector<std::size_t> all(p.features.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> grad(model.params.size());
  objective_and_gradient(model, p.features, p.soft, all, 0.0, grad);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(grad[3 * p.features.cols() + k], 0.0, 1e-15);
}

TEST(Fit, SeparableDataTrainsToLowError) {
  const auto data = make_synthetic_dataset(2000, 2, 10, 6.0, {6, 0});
  const auto model = fit(data.features, SoftLabels::one_hot(data.truth, 2), LearnerConfig{}, {6, 1});
  EXPECT_LE(zero_one_risk(model, data.features, data.truth), 0.01);
}

TEST(Fit, UniformTargetsShrinkTowardUniform) {
  const auto data = make_synthetic_dataset(1000, 3, 6, 4.0, {7, 0});
  const auto held_out = make_synthetic_dataset(500, 3, 6, 4.0, {7, 1});
  SoftLabels soft{Matrix(1000, 3, 1.0 / 3.0)};
  LearnerConfig cfg;
  cfg.l2_penalty = 0.1;
  cfg.init_scale = 0.5;
  // Softmax ignores a shift shared by all classes, so only the penalty pulls
  // that component to zero; give it enough steps.
  cfg.epochs = 300;
  const auto model = fit(data.features, soft, cfg, {7, 2});
  double norm = 0.0;
  for (double p : model.params) norm += p * p;
  EXPECT_LT(std::sqrt(norm), 0.05);
  for (double p : predict_proba(model, held_out.features).data()) EXPECT_LE(p, 1.0 / 3.0 + 0.05);
}

TEST(Fit, SplittingAnExampleAcrossDuplicatesGivesTheSameModel) {
  // Soft row (0.5, 0.5) on x vs one-hot rows (1,0) and (0,1) on two copies of x.
  const auto data = make_synthetic_dataset(60, 2, 3, 2.0, {8, 0});
  SoftLabels half{Matrix(60, 2, 0.5)};
  Matrix doubled(120, 3);
  SoftLabels split{Matrix(120, 2)};
  for (std::size_t i = 0; i < 60; ++i) {
    for (std::size_t j = 0; j < 3; ++j) doubled(2 * i, j) = doubled(2 * i + 1, j) = data.features(i, j);
    split.rows(2 * i, 0) = 1.0;
    split.rows(2 * i + 1, 1) = 1.0;
  }
  LearnerConfig cfg;
  cfg.batch_size = 0;
  cfg.epochs = 100;
  cfg.init_scale = 0.3;
  const auto a = fit(data.features, half, cfg, {8, 1});
  const auto b = fit(doubled, split, cfg, {8, 1});
  for (std::size_t j = 0; j < a.params.size(); ++j) EXPECT_NEAR(a.params[j], b.params[j], 1e-12);
}

TEST(Fit, FullBatchObjectiveIsMonotone) {
  const auto data = make_synthetic_dataset(300, 3, 5, 3.0, {9, 0});
  const auto soft = SoftLabels::one_hot(data.truth, 3);
  for (auto kind : {LearnerKind::kLogistic, LearnerKind::kMlp}) {
    LearnerConfig cfg;
    cfg.kind = kind;
    cfg.batch_size = 0;
    cfg.learning_rate = 0.01;
    cfg.epochs = 200;
    cfg.init_scale = 0.1;
    const auto report = fit_report(data.features, soft, cfg, {9, 1}, true);
    ASSERT_EQ(report.epoch_objective.size(), 200u);
    for (std::size_t e = 1; e < report.epoch_objective.size(); ++e) {
      ASSERT_LE(report.epoch_objective[e], report.epoch_objective[e - 1] + 1e-9) << "epoch " << e;
    }
    EXPECT_LT(report.epoch_objective.back(), report.epoch_objective.front());
  }
}

TEST(Fit, DeterministicGivenSeed) {
  const auto data = make_synthetic_dataset(400, 3, 5, 2.0, {10, 0});
  const auto soft = SoftLabels::one_hot(data.truth, 3);
  LearnerConfig cfg;
  cfg.kind = LearnerKind::kMlp;
  EXPECT_EQ(fit(data.features, soft, cfg, {10, 1}), fit(data.features, soft, cfg, {10, 1}));
  EXPECT_NE(fit(data.features, soft, cfg, {10, 1}), fit(data.features, soft, cfg, {10, 2}));
}

TEST(Fit, NonFiniteObjectiveAborts) {
  auto data = make_synthetic_dataset(50, 2, 2, 1.0, {11, 0});
  for (double& x : data.features.data()) x *= 1e200;
  LearnerConfig cfg;
  cfg.init_scale = 1.0;
  EXPECT_THROW(fit(data.features, SoftLabels::one_hot(data.truth, 2), cfg, {11, 1}), Error);
}

TEST(Fit, RejectsBadConfig) {
  const auto data = make_synthetic_dataset(10, 2, 2, 1.0, {12, 0});
  LearnerConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(fit(data.features, SoftLabels::one_hot(data.truth, 2), cfg, {}), Error);
  cfg = {};
  cfg.epochs = 0;
  EXPECT_THROW(fit(data.features, SoftLabels::one_hot(data.truth, 2), cfg, {}), Error);
}

TEST(ZeroOneRisk, PerfectAndConstantModels) {
  const auto data = make_synthetic_dataset(200, 2, 2, 1.0, {13, 0});
  // Features are exactly one-hot so the identity map predicts the truth.
  Matrix onehot(200, 2);
  for (std::size_t i = 0; i < 200; ++i) onehot(i, data.truth[i]) = 1.0;
  TrainedModel perfect{LearnerKind::kLogistic, 2, 2, 0, {10.0, 0.0, 0.0, 10.0, 0.0, 0.0}};
  EXPECT_EQ(zero_one_risk(perfect, onehot, data.truth), 0.0);
  TrainedModel constant{LearnerKind::kLogistic, 2, 2, 0, {0.0, 0.0, 0.0, 0.0, 0.0, 1.0}};
  EXPECT_EQ(zero_one_risk(constant, onehot, data.truth), 0.5);
}

TEST(ZeroOneRisk, TrainedOnTruthGeneralises) {
  const auto train = make_synthetic_dataset(2000, 2, 10, 6.0, {14, 0});
  const auto test = make_synthetic_dataset(2000, 2, 10, 6.0, {14, 1});
  const auto model = fit(train.features, SoftLabels::one_hot(train.truth, 2), LearnerConfig{}, {14, 2});
  EXPECT_LE(zero_one_risk(model, test.features, test.truth), 0.02);
}

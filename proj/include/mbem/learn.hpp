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

#pragma once

// Probabilistic classifiers trained on soft labels. The training objective is
// the posterior-weighted cross-entropy
//
//   J(theta) = (1/|B|) sum_{i in B} sum_k w_ik * (-log p_k(x_i; theta)) + (l2/2) ||theta||^2
//
// minimised with plain mini-batch gradient descent.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mbem/core.hpp"
#include "mbem/matrix.hpp"
#include "mbem/rng.hpp"

namespace mbem {

enum class LearnerKind { kLogistic, kMlp };

inline LearnerKind parse_learner_kind(const std::string& name) {
  if (name == "multinomial_logistic" || name == "logistic") return LearnerKind::kLogistic;
  if (name == "one_hidden_layer_mlp" || name == "mlp") return LearnerKind::kMlp;
  throw Error("unknown learner kind '" + name + "'");
}

inline std::string to_string(LearnerKind kind) {
  return kind == LearnerKind::kLogistic ? "multinomial_logistic" : "one_hidden_layer_mlp";
}

struct LearnerConfig {
  LearnerKind kind = LearnerKind::kLogistic;
  double l2_penalty = 1e-4;
  double learning_rate = 0.05;
  std::size_t epochs = 30;
  /// 0 (or >= n) means full-batch gradient descent.
  std::size_t batch_size = 128;
  std::size_t hidden_units = 16;
  /// Standard deviation of the Gaussian parameter initialisation.
  double init_scale = 0.01;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error("learner: learning_rate must be positive");
    if (epochs < 1) throw Error("learner: epochs must be >= 1");
    if (!(l2_penalty >= 0.0)) throw Error("learner: l2_penalty must be nonnegative");
    if (kind == LearnerKind::kMlp && hidden_units == 0) throw Error("learner: mlp needs hidden units");
  }
};

/// Parameters are stored flat. Logistic: W (K x d) then b (K).
/// MLP: W1 (H x d), b1 (H), W2 (K x H), b2 (K).
struct TrainedModel {
  LearnerKind kind = LearnerKind::kLogistic;
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::size_t hidden_units = 0;
  std::vector<double> params;

  bool operator==(const TrainedModel&) const = default;
};

inline std::size_t parameter_count(LearnerKind kind, std::size_t num_classes, std::size_t dim, std::size_t hidden) {
  if (kind == LearnerKind::kLogistic) return num_classes * dim + num_classes;
  return hidden * dim + hidden + num_classes * hidden + num_classes;
}

inline TrainedModel zero_model(LearnerKind kind, std::size_t num_classes, std::size_t dim, std::size_t hidden = 0) {
  if (kind == LearnerKind::kLogistic) hidden = 0;
  return {kind, num_classes, dim, hidden, std::vector<double>(parameter_count(kind, num_classes, dim, hidden), 0.0)};
}

/// sum_k weights[k] * (-log predicted[k]), with predicted clamped to >= 1e-12.
inline double weighted_loss(std::span<const double> predicted, std::span<const double> weights) {
  if (predicted.size() != weights.size()) throw Error("weighted_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    if (weights[k] != 0.0) loss -= weights[k] * std::log(std::max(predicted[k], 1e-12));
  }
  return loss;
}

namespace detail {

// In-place softmax; returns log-sum-exp of the input logits.
inline double softmax_inplace(std::span<double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return top + std::log(sum);
}

// Scratch buffers for one forward/backward pass.
struct Workspace {
  std::vector<double> logits;
  std::vector<double> raw;
  std::vector<double> hidden;
  std::vector<double> dlogits;
  std::vector<double> dhidden;

  explicit Workspace(const TrainedModel& m)
      : logits(m.num_classes), raw(m.num_classes), hidden(m.hidden_units), dlogits(m.num_classes), dhidden(m.hidden_units) {}
};

// Forward pass for one example. Leaves probabilities in ws.logits, the raw
// logits in ws.raw, and returns their log-sum-exp.
inline double forward(const TrainedModel& m, std::span<const double> x, Workspace& ws) {
  const std::size_t K = m.num_classes, d = m.dim, H = m.hidden_units;
  const double* p = m.params.data();
  if (m.kind == LearnerKind::kLogistic) {
    const double* bias = p + K * d;
    for (std::size_t k = 0; k < K; ++k) {
      const double* w = p + k * d;
      double z = bias[k];
      for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
      ws.logits[k] = z;
    }
  } else {
    const double* b1 = p + H * d;
    const double* w2 = b1 + H;
    const double* b2 = w2 + K * H;
    for (std::size_t h = 0; h < H; ++h) {
      const double* w = p + h * d;
      double a = b1[h];
      for (std::size_t j = 0; j < d; ++j) a += w[j] * x[j];
      ws.hidden[h] = std::tanh(a);
    }
    for (std::size_t k = 0; k < K; ++k) {
      const double* w = w2 + k * H;
      double z = b2[k];
      for (std::size_t h = 0; h < H; ++h) z += w[h] * ws.hidden[h];
      ws.logits[k] = z;
    }
  }
  std::copy(ws.logits.begin(), ws.logits.end(), ws.raw.begin());
  return softmax_inplace(ws.logits);
}

// Adds d(loss_i)/d(theta) * scale into grad. ws must hold the forward pass
// of x, and weights must be the example's soft label.
inline void backward(const TrainedModel& m, std::span<const double> x, std::span<const double> weights,
                     double scale, Workspace& ws, std::span<double> grad) {
  const std::size_t K = m.num_classes, d = m.dim, H = m.hidden_units;
  double weight_sum = 0.0;
  for (double w : weights) weight_sum += w;
  for (std::size_t k = 0; k < K; ++k) ws.dlogits[k] = scale * (weight_sum * ws.logits[k] - weights[k]);

  double* g = grad.data();
  if (m.kind == LearnerKind::kLogistic) {
    double* gbias = g + K * d;
    for (std::size_t k = 0; k < K; ++k) {
      const double dz = ws.dlogits[k];
      double* gw = g + k * d;
      for (std::size_t j = 0; j < d; ++j) gw[j] += dz * x[j];
      gbias[k] += dz;
    }
    return;
  }
  const double* w2 = m.params.data() + H * d + H;
  double* gb1 = g + H * d;
  double* gw2 = gb1 + H;
  double* gb2 = gw2 + K * H;
  std::fill(ws.dhidden.begin(), ws.dhidden.end(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double dz = ws.dlogits[k];
    gb2[k] += dz;
    for (std::size_t h = 0; h < H; ++h) {
      gw2[k * H + h] += dz * ws.hidden[h];
      ws.dhidden[h] += dz * w2[k * H + h];
    }
  }
  for (std::size_t h = 0; h < H; ++h) {
    const double da = ws.dhidden[h] * (1.0 - ws.hidden[h] * ws.hidden[h]);
    gb1[h] += da;
    double* gw = g + h * d;
    for (std::size_t j = 0; j < d; ++j) gw[j] += da * x[j];
  }
}

inline void check_shapes(const TrainedModel& m, const Matrix& features) {
  if (features.cols() != m.dim) {
    throw Error("feature dimension " + std::to_string(features.cols()) + " does not match model dimension " +
                std::to_string(m.dim));
  }
  if (m.params.size() != parameter_count(m.kind, m.num_classes, m.dim, m.hidden_units)) {
    throw Error("model parameter vector has the wrong length");
  }
}

}  // namespace detail

/// Objective J over the examples listed in `batch` and, if `grad` is
/// non-empty, its gradient (overwritten).
inline double objective_and_gradient(const TrainedModel& model, const Matrix& features, const SoftLabels& soft,
                                     std::span<const std::size_t> batch, double l2_penalty,
                                     std::span<double> grad = {}) {
  detail::check_shapes(model, features);
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  detail::Workspace ws(model);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t i : batch) {
    const auto x = features.row(i);
    const auto w = soft.rows.row(i);
    const double lse = detail::forward(model, x, ws);
    for (std::size_t k = 0; k < model.num_classes; ++k) {
      if (w[k] != 0.0) loss += w[k] * (lse - ws.raw[k]);
    }
    if (want_grad) detail::backward(model, x, w, scale, ws, grad);
  }
  loss *= scale;
  double norm2 = 0.0;
  for (std::size_t j = 0; j < model.params.size(); ++j) {
    norm2 += model.params[j] * model.params[j];
    if (want_grad) grad[j] += l2_penalty * model.params[j];
  }
  return loss + 0.5 * l2_penalty * norm2;
}

/// Objective J over every example.
inline double full_objective(const TrainedModel& model, const Matrix& features, const SoftLabels& soft,
                             double l2_penalty) {
  std::vector<std::size_t> all(features.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return objective_and_gradient(model, features, soft, all, l2_penalty);
}

/// Row-stochastic class probabilities for every row of `features`.
inline Matrix predict_proba(const TrainedModel& model, const Matrix& features) {
  detail::check_shapes(model, features);
  detail::Workspace ws(model);
  Matrix out(features.rows(), model.num_classes);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    detail::forward(model, features.row(i), ws);
    std::copy(ws.logits.begin(), ws.logits.end(), out.row(i).begin());
  }
  return out;
}

/// Argmax predictions, ties to the lowest class.
inline Labels predict_labels(const TrainedModel& model, const Matrix& features) {
  const Matrix probs = predict_proba(model, features);
  Labels out(probs.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax(probs.row(i));
  return out;
}

/// Fraction of examples whose predicted class differs from the truth.
inline double zero_one_risk(const TrainedModel& model, const Matrix& features, const Labels& truth) {
  if (truth.size() != features.rows()) throw Error("zero_one_risk: truth length does not match features");
  if (truth.empty()) throw Error("zero_one_risk: no examples");
  const Labels pred = predict_labels(model, features);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) wrong += pred[i] != truth[i];
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

/// Model with parameters drawn i.i.d. N(0, scale^2).
inline TrainedModel random_model(const LearnerConfig& cfg, std::size_t num_classes, std::size_t dim, double scale,
                                 RngSeed seed) {
  TrainedModel m = zero_model(cfg.kind, num_classes, dim, cfg.hidden_units);
  Rng rng(seed);
  for (double& p : m.params) p = scale * rng.normal();
  return m;
}

struct FitReport {
  TrainedModel model;
  /// Full-data objective after each epoch (filled only when requested).
  std::vector<double> epoch_objective;
};

/// Mini-batch gradient descent on J from a seeded random start. Batch order is
/// reshuffled every epoch from the same seed, so the result is reproducible.
inline FitReport fit_report(const Matrix& features, const SoftLabels& soft, const LearnerConfig& cfg, RngSeed seed,
                            bool track_objective = false) {
  cfg.validate();
  if (soft.num_examples() != features.rows()) throw Error("fit: soft labels and features disagree on n");
  if (features.rows() == 0) throw Error("fit: no training examples");
  const std::size_t n = features.rows();

  FitReport report;
  report.model = random_model(cfg, soft.num_classes(), features.cols(), cfg.init_scale, substream(seed, StreamTag::kLearner, 0));
  TrainedModel& model = report.model;
  Rng order_rng(substream(seed, StreamTag::kLearner, 1));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = (cfg.batch_size == 0 || cfg.batch_size >= n) ? n : cfg.batch_size;
  const bool full_batch = batch == n;
  std::vector<double> grad(model.params.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (!full_batch) order_rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      const double obj = objective_and_gradient(model, features, soft,
                                                std::span<const std::size_t>(order).subspan(start, len),
                                                cfg.l2_penalty, grad);
      if (!std::isfinite(obj)) {
        throw Error("fit: non-finite objective in epoch " + std::to_string(epoch) + " (learning rate " +
                    std::to_string(cfg.learning_rate) + ")");
      }
      for (std::size_t j = 0; j < grad.size(); ++j) model.params[j] -= cfg.learning_rate * grad[j];
    }
    if (track_objective) report.epoch_objective.push_back(full_objective(model, features, soft, cfg.l2_penalty));
  }
  for (double p : model.params) {
    if (!std::isfinite(p)) throw Error("fit: parameters diverged");
  }
  return report;
}

inline TrainedModel fit(const Matrix& features, const SoftLabels& soft, const LearnerConfig& cfg, RngSeed seed) {
  return fit_report(features, soft, cfg, seed).model;
}

/// Largest relative difference between the analytic gradient of J and a
/// central finite difference (step 1e-5), at a random point with N(0, 0.5^2)
/// parameters. Relative error is |a - f| / max(|a|, |f|, 1e-8).
inline double gradient_check(const LearnerConfig& cfg, const Matrix& features, const SoftLabels& soft, RngSeed seed) {
  TrainedModel model = random_model(cfg, soft.num_classes(), features.cols(), 0.5, seed);
  std::vector<std::size_t> all(features.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> analytic(model.params.size());
  objective_and_gradient(model, features, soft, all, cfg.l2_penalty, analytic);

  constexpr double h = 1e-5;
  double worst = 0.0;
  for (std::size_t j = 0; j < model.params.size(); ++j) {
    const double saved = model.params[j];
    model.params[j] = saved + h;
    const double up = objective_and_gradient(model, features, soft, all, cfg.l2_penalty);
    model.params[j] = saved - h;
    const double down = objective_and_gradient(model, features, soft, all, cfg.l2_penalty);
    model.params[j] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[j]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[j] - numeric) / denom);
  }
  return worst;
}

}  // namespace mbem

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

// Model-bootstrapped EM and the baselines it is compared against.
//
// One MBEM round:
//   1. fit a fresh model on the current soft labels,
//   2. predict hard labels t on the training examples,
//   3. estimate every worker's confusion matrix (and the prior) treating t as truth,
//   4. recompute the label posterior from those estimates.
// The first round starts from the annotation frequencies.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mbem/core.hpp"
#include "mbem/learn.hpp"
#include "mbem/matrix.hpp"
#include "mbem/rng.hpp"

namespace mbem {

struct MbemConfig {
  std::size_t rounds = 2;
  PriorMode prior_mode = PriorMode::kUniform;
  double smoothing = 1.0;
  LearnerConfig learner;
  PosteriorOptions posterior;
  /// Iteration limits of the annotation-only EM used by the em baselines.
  std::size_t em_max_iters = 100;
  double em_tol = 1e-8;

  EmOptions em_options() const { return {em_max_iters, em_tol, smoothing, prior_mode, posterior}; }
};

struct MbemResult {
  TrainedModel model;
  std::vector<ConfusionMatrix> confusions;
  ClassPrior prior;
  SoftLabels soft;
  /// Mean weighted cross-entropy of each round's model on the soft labels it was fit to.
  std::vector<double> per_round_train_risk;
};

/// Runs exactly cfg.rounds rounds. Every round refits from the same seed.
inline MbemResult run_mbem(const Matrix& features, const AnnotationSet& ann, const MbemConfig& cfg, RngSeed seed) {
  if (cfg.rounds < 1) throw Error("run_mbem: rounds must be >= 1");
  if (features.rows() != ann.num_examples()) throw Error("run_mbem: features and annotations disagree on n");

  MbemResult res;
  res.soft = majority_vote_init(ann);
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    try {
      res.model = fit(features, res.soft, cfg.learner, seed);
    } catch (const Error& e) {
      throw Error("mbem round " + std::to_string(round) + ": " + e.what());
    }
    res.per_round_train_risk.push_back(full_objective(res.model, features, res.soft, 0.0));
    auto est = estimate_confusions_and_prior(ann, predict_labels(res.model, features), cfg.smoothing);
    res.confusions = std::move(est.confusions);
    res.prior = cfg.prior_mode == PriorMode::kEstimated ? std::move(est.prior) : ClassPrior::uniform(ann.num_classes());
    res.soft = posterior(ann, res.confusions, res.prior, cfg.posterior);
  }
  return res;
}

enum class WeightedMode { kWeightedMv, kWeightedEm, kOracleWeightedEm };

/// Soft training targets of the weighted baselines: annotation frequencies,
/// the annotation-only EM posterior, or the posterior under the true
/// confusions with a uniform prior.
inline SoftLabels weighted_baseline_targets(const AnnotationSet& ann, WeightedMode mode,
                                            std::span<const ConfusionMatrix> oracle_confusions,
                                            const MbemConfig& cfg) {
  switch (mode) {
    case WeightedMode::kWeightedMv:
      return majority_vote_init(ann);
    case WeightedMode::kWeightedEm:
      return classic_em(ann, cfg.em_options()).soft;
    case WeightedMode::kOracleWeightedEm:
      if (oracle_confusions.empty()) throw Error("oracle weighted EM requires the true confusion matrices");
      return posterior(ann, oracle_confusions, ClassPrior::uniform(ann.num_classes()), cfg.posterior);
  }
  throw Error("unknown weighted mode");
}

inline TrainedModel run_weighted_baseline(const Matrix& features, const AnnotationSet& ann, WeightedMode mode,
                                          std::span<const ConfusionMatrix> oracle_confusions, const MbemConfig& cfg,
                                          RngSeed seed) {
  return fit(features, weighted_baseline_targets(ann, mode, oracle_confusions, cfg), cfg.learner, seed);
}

enum class HardMode { kMv, kEm, kOracleCorrect };

/// Subset of training rows and the one-hot labels they are trained on.
struct HardTrainingSet {
  std::vector<std::size_t> rows;
  Labels labels;
};

inline HardTrainingSet hard_baseline_targets(const AnnotationSet& ann, HardMode mode, const Labels* truth,
                                             const MbemConfig& cfg) {
  HardTrainingSet out;
  if (mode == HardMode::kOracleCorrect) {
    if (truth == nullptr) throw Error("oracle-correct baseline requires ground truth");
    if (truth->size() != ann.num_examples()) throw Error("oracle-correct: truth length does not match annotations");
    for (std::size_t i = 0; i < ann.num_examples(); ++i) {
      for (const auto& a : ann.for_example(i)) {
        if (a.label == (*truth)[i]) {
          out.rows.push_back(i);
          out.labels.push_back(a.label);
          break;
        }
      }
    }
    if (out.rows.empty()) throw Error("oracle-correct: no example has a correct annotation");
    return out;
  }
  out.labels = hard_labels(mode == HardMode::kMv ? majority_vote_init(ann) : classic_em(ann, cfg.em_options()).soft);
  out.rows.resize(out.labels.size());
  for (std::size_t i = 0; i < out.rows.size(); ++i) out.rows[i] = i;
  return out;
}

inline Matrix select_rows(const Matrix& features, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = features.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

inline TrainedModel run_hard_baseline(const Matrix& features, const AnnotationSet& ann, HardMode mode,
                                      const Labels* truth, const MbemConfig& cfg, RngSeed seed) {
  if (features.rows() != ann.num_examples()) throw Error("baseline: features and annotations disagree on n");
  const HardTrainingSet set = hard_baseline_targets(ann, mode, truth, cfg);
  const SoftLabels targets = SoftLabels::one_hot(set.labels, ann.num_classes());
  if (set.rows.size() == features.rows()) return fit(features, targets, cfg.learner, seed);
  return fit(select_rows(features, set.rows), targets, cfg.learner, seed);
}

/// Every training method the tools know about. kTruth trains on ground truth.
enum class Method { kMv, kEm, kWeightedMv, kWeightedEm, kMbem, kOracleWeightedEm, kOracleCorrect, kTruth };

inline constexpr Method kAllMethods[] = {Method::kMv,   Method::kEm,          Method::kWeightedMv,
                                         Method::kWeightedEm, Method::kMbem, Method::kOracleWeightedEm,
                                         Method::kOracleCorrect, Method::kTruth};

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kMv: return "mv";
    case Method::kEm: return "em";
    case Method::kWeightedMv: return "weighted-mv";
    case Method::kWeightedEm: return "weighted-em";
    case Method::kMbem: return "mbem";
    case Method::kOracleWeightedEm: return "oracle-weighted-em";
    case Method::kOracleCorrect: return "oracle-correct";
    case Method::kTruth: return "truth";
  }
  return "?";
}

inline Method parse_method(const std::string& name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw Error("unknown method '" + name + "'");
}

/// What a method may need beyond features and annotations.
struct MethodInputs {
  const Labels* truth = nullptr;
  std::span<const ConfusionMatrix> true_confusions;
};

struct MethodOutput {
  TrainedModel model;
  /// Filled by mbem only.
  std::vector<ConfusionMatrix> confusions;
  SoftLabels soft;
};

inline MethodOutput train_method(Method method, const Matrix& features, const AnnotationSet& ann,
                                 const MethodInputs& extra, const MbemConfig& cfg, RngSeed seed) {
  MethodOutput out;
  switch (method) {
    case Method::kMv:
      out.model = run_hard_baseline(features, ann, HardMode::kMv, nullptr, cfg, seed);
      break;
    case Method::kEm:
      out.model = run_hard_baseline(features, ann, HardMode::kEm, nullptr, cfg, seed);
      break;
    case Method::kOracleCorrect:
      out.model = run_hard_baseline(features, ann, HardMode::kOracleCorrect, extra.truth, cfg, seed);
      break;
    case Method::kWeightedMv:
      out.soft = weighted_baseline_targets(ann, WeightedMode::kWeightedMv, {}, cfg);
      out.model = fit(features, out.soft, cfg.learner, seed);
      break;
    case Method::kWeightedEm:
      out.soft = weighted_baseline_targets(ann, WeightedMode::kWeightedEm, {}, cfg);
      out.model = fit(features, out.soft, cfg.learner, seed);
      break;
    case Method::kOracleWeightedEm:
      out.soft = weighted_baseline_targets(ann, WeightedMode::kOracleWeightedEm, extra.true_confusions, cfg);
      out.model = fit(features, out.soft, cfg.learner, seed);
      break;
    case Method::kMbem: {
      auto res = run_mbem(features, ann, cfg, seed);
      out.model = std::move(res.model);
      out.confusions = std::move(res.confusions);
      out.soft = std::move(res.soft);
      break;
    }
    case Method::kTruth:
      if (extra.truth == nullptr) throw Error("truth method requires ground truth");
      out.model = fit(features, SoftLabels::one_hot(*extra.truth, ann.num_classes()), cfg.learner, seed);
      break;
  }
  return out;
}

}  // namespace mbem

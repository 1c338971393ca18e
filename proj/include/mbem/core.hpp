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

// Dawid-Skene annotation model: per-worker confusion matrices, label
// posteriors, confusion/prior maximum likelihood estimates and the classic
// alternating EM that only looks at the annotations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mbem/matrix.hpp"

namespace mbem {

inline constexpr double kStochasticTol = 1e-9;
inline constexpr double kDefaultClamp = 1e-6;

/// Class indices, one per example. Used both for ground truth and for
/// aggregated or predicted labels.
using Labels = std::vector<std::size_t>;

/// Row-stochastic K x K matrix; entry (k, s) is P(worker reports s | truth k).
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;

  explicit ConfusionMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols() || entries_.rows() == 0) {
      throw Error("confusion matrix must be square and non-empty");
    }
    require_row_stochastic(entries_, kStochasticTol, "confusion matrix");
  }

  static ConfusionMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].size() != m.cols()) throw Error("confusion matrix rows have unequal length");
      std::copy(rows[k].begin(), rows[k].end(), m.row(k).begin());
    }
    return ConfusionMatrix(std::move(m));
  }

  static ConfusionMatrix identity(std::size_t num_classes) {
    Matrix m(num_classes, num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) m(k, k) = 1.0;
    return ConfusionMatrix(std::move(m));
  }

  static ConfusionMatrix uniform(std::size_t num_classes) {
    return ConfusionMatrix(Matrix(num_classes, num_classes, 1.0 / static_cast<double>(num_classes)));
  }

  /// Single-parameter symmetric worker: correct w.p. 1 - flip, otherwise
  /// each wrong class w.p. flip / (K - 1).
  static ConfusionMatrix symmetric(std::size_t num_classes, double flip) {
    Matrix m(num_classes, num_classes, flip / static_cast<double>(num_classes - 1));
    for (std::size_t k = 0; k < num_classes; ++k) m(k, k) = 1.0 - flip;
    return ConfusionMatrix(std::move(m));
  }

  std::size_t num_classes() const { return entries_.rows(); }
  double operator()(std::size_t truth, std::size_t reported) const { return entries_(truth, reported); }
  std::span<const double> row(std::size_t truth) const { return entries_.row(truth); }
  const Matrix& entries() const { return entries_; }

  /// Mean of the diagonal.
  double mean_diagonal() const {
    double acc = 0.0;
    for (std::size_t k = 0; k < num_classes(); ++k) acc += entries_(k, k);
    return acc / static_cast<double>(num_classes());
  }

  /// Copy with entries clamped to [floor, 1 - floor] and rows renormalized.
  ConfusionMatrix clamped(double floor) const {
    Matrix m = entries_;
    for (std::size_t k = 0; k < m.rows(); ++k) {
      auto row = m.row(k);
      double sum = 0.0;
      for (double& v : row) {
        v = std::clamp(v, floor, 1.0 - floor);
        sum += v;
      }
      for (double& v : row) v /= sum;
    }
    ConfusionMatrix out;
    out.entries_ = std::move(m);
    return out;
  }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  Matrix entries_;
};

/// Largest absolute entrywise difference.
inline double max_abs_diff(const ConfusionMatrix& a, const ConfusionMatrix& b) {
  if (a.num_classes() != b.num_classes()) throw Error("confusion matrices differ in size");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.num_classes(); ++k) {
    for (std::size_t s = 0; s < a.num_classes(); ++s) worst = std::max(worst, std::abs(a(k, s) - b(k, s)));
  }
  return worst;
}

/// Distribution of the true class.
struct ClassPrior {
  std::vector<double> probs;

  static ClassPrior uniform(std::size_t num_classes) {
    return {std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes))};
  }

  void validate() const {
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0 && p <= 1.0)) throw Error("class prior entry outside [0,1]");
      sum += p;
    }
    if (probs.empty() || std::abs(sum - 1.0) > kStochasticTol) throw Error("class prior does not sum to 1");
  }

  bool operator==(const ClassPrior&) const = default;
};

enum class PriorMode { kUniform, kEstimated };

struct Annotation {
  std::size_t example = 0;
  std::size_t worker = 0;
  std::size_t label = 0;

  bool operator==(const Annotation&) const = default;
};

/// Sparse (example, worker, label) triples. Records are grouped by example,
/// keeping input order within each example. The number of annotations per
/// example (the redundancy) may vary.
class AnnotationSet {
 public:
  AnnotationSet() = default;

  AnnotationSet(std::size_t num_examples, std::size_t num_workers, std::size_t num_classes,
                std::vector<Annotation> records)
      : n_(num_examples), m_(num_workers), k_(num_classes), offsets_(num_examples + 1, 0) {
    if (num_classes < 2) throw Error("annotation set needs at least two classes");
    for (const auto& a : records) {
      if (a.example >= n_ || a.worker >= m_ || a.label >= k_) {
        throw Error("annotation (" + std::to_string(a.example) + ", " + std::to_string(a.worker) + ", " +
                    std::to_string(a.label) + ") out of bounds");
      }
      ++offsets_[a.example + 1];
    }
    for (std::size_t i = 0; i < n_; ++i) offsets_[i + 1] += offsets_[i];
    records_.resize(records.size());
    std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (const auto& a : records) records_[cursor[a.example]++] = a;
  }

  std::size_t num_examples() const { return n_; }
  std::size_t num_workers() const { return m_; }
  std::size_t num_classes() const { return k_; }
  std::size_t size() const { return records_.size(); }

  std::span<const Annotation> records() const { return records_; }
  std::span<const Annotation> for_example(std::size_t i) const {
    return {records_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::size_t redundancy(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }

  /// Throws naming the first example that has no annotation.
  void require_coverage() const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (redundancy(i) == 0) throw Error("example " + std::to_string(i) + " has no annotations");
    }
  }

  bool operator==(const AnnotationSet&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::size_t k_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<Annotation> records_;
};

/// Per-example posterior weights over classes (n x K, rows on the simplex).
struct SoftLabels {
  Matrix rows;

  std::size_t num_examples() const { return rows.rows(); }
  std::size_t num_classes() const { return rows.cols(); }

  static SoftLabels one_hot(const Labels& labels, std::size_t num_classes) {
    SoftLabels out{Matrix(labels.size(), num_classes)};
    for (std::size_t i = 0; i < labels.size(); ++i) out.rows(i, labels.at(i)) = 1.0;
    return out;
  }

  bool operator==(const SoftLabels&) const = default;
};

/// Per-row argmax, ties to the lowest class index.
inline Labels hard_labels(const SoftLabels& soft) {
  Labels out(soft.num_examples());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax(soft.rows.row(i));
  return out;
}

/// Fraction of each example's annotations that report each class.
inline SoftLabels majority_vote_init(const AnnotationSet& ann) {
  ann.require_coverage();
  SoftLabels out{Matrix(ann.num_examples(), ann.num_classes())};
  for (std::size_t i = 0; i < ann.num_examples(); ++i) {
    const auto labels = ann.for_example(i);
    const double share = 1.0 / static_cast<double>(labels.size());
    for (const auto& a : labels) out.rows(i, a.label) += share;
  }
  return out;
}

struct PosteriorOptions {
  /// Confusion entries are clamped to [clamp, 1 - clamp] before use; 0 disables.
  double clamp = kDefaultClamp;
};

/// Posterior of the true class given each example's annotations under the
/// Dawid-Skene model with the given confusions and prior. Accumulated in the
/// log domain so long annotation lists do not underflow.
inline SoftLabels posterior(const AnnotationSet& ann, std::span<const ConfusionMatrix> confusions,
                            const ClassPrior& prior, PosteriorOptions opts = {}) {
  const std::size_t num_classes = ann.num_classes();
  if (confusions.size() != ann.num_workers()) throw Error("posterior: need one confusion matrix per worker");
  if (prior.probs.size() != num_classes) throw Error("posterior: prior has wrong length");

  // Per-worker log-likelihood tables.
  std::vector<Matrix> log_conf;
  log_conf.reserve(confusions.size());
  for (const auto& c : confusions) {
    if (c.num_classes() != num_classes) throw Error("posterior: confusion matrix has wrong size");
    const ConfusionMatrix used = opts.clamp > 0.0 ? c.clamped(opts.clamp) : c;
    Matrix table(num_classes, num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) {
      for (std::size_t s = 0; s < num_classes; ++s) table(k, s) = std::log(used(k, s));
    }
    log_conf.push_back(std::move(table));
  }
  std::vector<double> log_prior(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) log_prior[k] = std::log(prior.probs[k]);

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  SoftLabels out{Matrix(ann.num_examples(), num_classes)};
  std::vector<double> log_num(num_classes);
  for (std::size_t i = 0; i < ann.num_examples(); ++i) {
    log_num = log_prior;
    for (const auto& a : ann.for_example(i)) {
      const Matrix& table = log_conf[a.worker];
      for (std::size_t k = 0; k < num_classes; ++k) log_num[k] += table(k, a.label);
    }
    const double top = *std::max_element(log_num.begin(), log_num.end());
    if (top == kNegInf) throw Error("posterior: every class has zero probability for example " + std::to_string(i));
    double sum = 0.0;
    auto row = out.rows.row(i);
    for (std::size_t k = 0; k < num_classes; ++k) {
      row[k] = std::exp(log_num[k] - top);
      sum += row[k];
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

/// A (worker, true class) cell with no supporting annotations.
struct UndefinedRow {
  std::size_t worker = 0;
  std::size_t true_class = 0;

  bool operator==(const UndefinedRow&) const = default;
};

struct ConfusionEstimate {
  std::vector<ConfusionMatrix> confusions;
  ClassPrior prior;
  /// Rows that had no data and no smoothing; they are returned as uniform.
  std::vector<UndefinedRow> undefined_rows;
};

/// Maximum likelihood confusions and prior treating `truth` as the true
/// labels, with `smoothing` pseudo-counts added to every cell.
inline ConfusionEstimate estimate_confusions_and_prior(const AnnotationSet& ann, const Labels& truth,
                                                       double smoothing = 1.0) {
  const std::size_t num_classes = ann.num_classes();
  if (truth.size() != ann.num_examples()) throw Error("estimate_confusions_and_prior: one label per example required");
  if (smoothing < 0.0) throw Error("estimate_confusions_and_prior: smoothing must be nonnegative");

  std::vector<Matrix> counts(ann.num_workers(), Matrix(num_classes, num_classes));
  for (std::size_t i = 0; i < ann.num_examples(); ++i) {
    if (truth[i] >= num_classes) throw Error("estimate_confusions_and_prior: label out of range");
    for (const auto& a : ann.for_example(i)) counts[a.worker](truth[i], a.label) += 1.0;
  }

  ConfusionEstimate out;
  out.confusions.reserve(ann.num_workers());
  for (std::size_t w = 0; w < ann.num_workers(); ++w) {
    Matrix& c = counts[w];
    for (std::size_t k = 0; k < num_classes; ++k) {
      auto row = c.row(k);
      double total = 0.0;
      for (double v : row) total += v;
      const double denom = total + static_cast<double>(num_classes) * smoothing;
      if (denom == 0.0) {
        std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(num_classes));
        out.undefined_rows.push_back({w, k});
        continue;
      }
      for (double& v : row) v = (v + smoothing) / denom;
    }
    out.confusions.emplace_back(std::move(c));
  }

  out.prior.probs.assign(num_classes, 0.0);
  for (std::size_t t : truth) out.prior.probs[t] += 1.0;
  for (double& q : out.prior.probs) q /= static_cast<double>(truth.size());
  return out;
}

/// Settings shared by the annotation-only EM and its callers.
struct EmOptions {
  std::size_t max_iters = 100;
  /// Stop once the largest change of any posterior entry drops below tol.
  double tol = 1e-8;
  double smoothing = 1.0;
  PriorMode prior_mode = PriorMode::kUniform;
  PosteriorOptions posterior;
};

struct EmResult {
  SoftLabels soft;
  std::vector<ConfusionMatrix> confusions;
  ClassPrior prior;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Dawid-Skene EM without a model: majority vote start, then alternate hard
/// labels -> confusion/prior estimate -> posterior until the posterior settles.
inline EmResult classic_em(const AnnotationSet& ann, const EmOptions& opts = {}) {
  EmResult res;
  res.soft = majority_vote_init(ann);
  for (res.iterations = 1; res.iterations <= opts.max_iters; ++res.iterations) {
    auto est = estimate_confusions_and_prior(ann, hard_labels(res.soft), opts.smoothing);
    res.confusions = std::move(est.confusions);
    res.prior = opts.prior_mode == PriorMode::kEstimated ? std::move(est.prior)
                                                         : ClassPrior::uniform(ann.num_classes());
    SoftLabels next = posterior(ann, res.confusions, res.prior, opts.posterior);
    double change = 0.0;
    for (std::size_t j = 0; j < next.rows.data().size(); ++j) {
      change = std::max(change, std::abs(next.rows.data()[j] - res.soft.rows.data()[j]));
    }
    res.soft = std::move(next);
    if (change < opts.tol) {
      res.converged = true;
      return res;
    }
  }
  res.iterations = opts.max_iters;
  return res;
}

}  // namespace mbem

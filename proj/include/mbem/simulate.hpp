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

// Synthetic crowdsourcing: worker pools drawn from skill models, random
// worker-to-example assignment, label corruption, and a Gaussian feature
// model that stands in for real inputs.

#include <cstddef>
#include <string>
#include <vector>

#include "mbem/core.hpp"
#include "mbem/matrix.hpp"
#include "mbem/rng.hpp"

namespace mbem {

enum class SkillKind { kHammerSpammer, kClasswiseHammerSpammer };

inline SkillKind parse_skill_kind(const std::string& name) {
  if (name == "hammer_spammer" || name == "hammer-spammer") return SkillKind::kHammerSpammer;
  if (name == "classwise_hammer_spammer" || name == "classwise-hammer-spammer") {
    return SkillKind::kClasswiseHammerSpammer;
  }
  throw Error("unknown worker skill model '" + name + "'");
}

inline std::string to_string(SkillKind kind) {
  return kind == SkillKind::kHammerSpammer ? "hammer_spammer" : "classwise_hammer_spammer";
}

struct WorkerSkillModel {
  SkillKind kind = SkillKind::kHammerSpammer;
  /// Probability of being a hammer (per worker, or per class row).
  double hammer_prob = 0.2;
  std::size_t num_classes = 2;
};

/// Draws m confusion matrices. A hammer row is the identity row, a spammer
/// row is uniform. hammer_spammer decides once per worker, the class-wise
/// model once per row.
inline std::vector<ConfusionMatrix> sample_worker_pool(const WorkerSkillModel& model, std::size_t num_workers,
                                                       RngSeed seed) {
  if (num_workers == 0) throw Error("sample_worker_pool: need at least one worker");
  if (!(model.hammer_prob >= 0.0 && model.hammer_prob <= 1.0)) throw Error("hammer probability outside [0,1]");
  const std::size_t num_classes = model.num_classes;
  if (num_classes < 2) throw Error("sample_worker_pool: need at least two classes");
  const double spam = 1.0 / static_cast<double>(num_classes);

  Rng rng(seed);
  std::vector<ConfusionMatrix> pool;
  pool.reserve(num_workers);
  for (std::size_t a = 0; a < num_workers; ++a) {
    Matrix m(num_classes, num_classes);
    const bool worker_is_hammer = model.kind == SkillKind::kHammerSpammer && rng.bernoulli(model.hammer_prob);
    for (std::size_t k = 0; k < num_classes; ++k) {
      const bool hammer_row =
          model.kind == SkillKind::kHammerSpammer ? worker_is_hammer : rng.bernoulli(model.hammer_prob);
      if (hammer_row) {
        m(k, k) = 1.0;
      } else {
        for (std::size_t s = 0; s < num_classes; ++s) m(k, s) = spam;
      }
    }
    pool.emplace_back(std::move(m));
  }
  return pool;
}

/// Worker ids for each example, example-major (row i holds example i's slots).
struct Assignment {
  std::size_t num_examples = 0;
  std::size_t redundancy = 0;
  std::vector<std::size_t> workers;

  std::size_t operator()(std::size_t example, std::size_t slot) const { return workers[example * redundancy + slot]; }
  bool operator==(const Assignment&) const = default;
};

/// n*r i.i.d. uniform draws from the pool (with replacement, so a worker may
/// appear twice on one example).
inline Assignment assign_workers(std::size_t num_examples, std::size_t redundancy, std::size_t num_workers,
                                 RngSeed seed) {
  if (num_examples == 0 || redundancy == 0 || num_workers == 0) {
    throw Error("assign_workers: n, r and m must be positive");
  }
  Rng rng(seed);
  Assignment out{num_examples, redundancy, std::vector<std::size_t>(num_examples * redundancy)};
  for (auto& w : out.workers) w = static_cast<std::size_t>(rng.uniform_int(num_workers));
  return out;
}

/// Draws each annotation from row truth[i] of the assigned worker's matrix.
inline AnnotationSet corrupt_labels(const Labels& truth, const Assignment& assignment,
                                    const std::vector<ConfusionMatrix>& confusions, RngSeed seed) {
  if (truth.size() != assignment.num_examples) throw Error("corrupt_labels: truth and assignment disagree on n");
  if (confusions.empty()) throw Error("corrupt_labels: empty worker pool");
  const std::size_t num_classes = confusions.front().num_classes();
  Rng rng(seed);
  std::vector<Annotation> records;
  records.reserve(assignment.workers.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t j = 0; j < assignment.redundancy; ++j) {
      const std::size_t w = assignment(i, j);
      if (w >= confusions.size()) throw Error("corrupt_labels: worker id out of range");
      records.push_back({i, w, rng.categorical(confusions[w].row(truth[i]))});
    }
  }
  return AnnotationSet(truth.size(), confusions.size(), num_classes, std::move(records));
}

struct Dataset {
  Matrix features;
  Labels truth;
};

/// Class-balanced labels (counts differ by at most one); features are
/// margin * e_y plus unit Gaussian noise in every coordinate.
inline Dataset make_synthetic_dataset(std::size_t num_examples, std::size_t num_classes, std::size_t dim,
                                      double margin, RngSeed seed) {
  if (num_classes < 2) throw Error("make_synthetic_dataset: need at least two classes");
  if (dim < num_classes) throw Error("make_synthetic_dataset: feature dimension must be >= number of classes");
  Rng rng(seed);
  Dataset out{Matrix(num_examples, dim), Labels(num_examples)};
  for (std::size_t i = 0; i < num_examples; ++i) out.truth[i] = i % num_classes;
  rng.shuffle(std::span<std::size_t>(out.truth));
  for (std::size_t i = 0; i < num_examples; ++i) {
    auto row = out.features.row(i);
    for (double& x : row) x = rng.normal();
    row[out.truth[i]] += margin;
  }
  return out;
}

}  // namespace mbem

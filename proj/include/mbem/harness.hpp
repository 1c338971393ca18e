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

// Fixed-budget redundancy sweeps. For each redundancy r the budget N buys
// floor(N / r) training examples with r annotations each; every method is
// trained on the same simulated data and scored on a held-out test set that
// is shared across methods and redundancies for a given seed.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mbem/algorithm.hpp"
#include "mbem/core.hpp"
#include "mbem/io.hpp"
#include "mbem/learn.hpp"
#include "mbem/rng.hpp"
#include "mbem/simulate.hpp"

namespace mbem {

struct SweepSpec {
  std::size_t budget = 20000;
  std::vector<std::size_t> redundancies{1, 3, 5};
  std::vector<Method> methods{Method::kMv, Method::kWeightedEm, Method::kMbem};
  WorkerSkillModel worker_model{SkillKind::kHammerSpammer, 0.2, 5};
  std::size_t num_workers = 100;
  std::size_t num_classes = 5;
  std::size_t dim = 200;
  double margin = 4.0;
  std::size_t test_size = 5000;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  MbemConfig mbem;
  std::size_t jobs = 1;

  std::size_t train_size(std::size_t r) const { return budget / r; }

  void validate() const {
    if (redundancies.empty() || methods.empty() || seeds.empty()) {
      throw Error("sweep: redundancies, methods and seeds must be non-empty");
    }
    for (std::size_t r : redundancies) {
      if (r == 0 || train_size(r) < 1) throw Error("sweep: budget too small for redundancy " + std::to_string(r));
    }
    if (num_workers == 0 || test_size == 0) throw Error("sweep: need workers and a test set");
    if (worker_model.num_classes != num_classes) throw Error("sweep: worker model class count mismatch");
    if (dim < num_classes) throw Error("sweep: dim must be >= num_classes");
    mbem.learner.validate();
  }
};

struct SweepRecord {
  Method method = Method::kMv;
  std::size_t redundancy = 0;
  std::size_t train_size = 0;
  std::uint64_t seed = 0;
  double test_risk = std::numeric_limits<double>::quiet_NaN();
  /// 0-1 risk against the ground truth of the training examples.
  double train_risk = std::numeric_limits<double>::quiet_NaN();
  double wall_time_seconds = 0.0;
  /// Empty when the cell succeeded.
  std::string error;

  bool ok() const { return error.empty(); }
};

struct CellAggregate {
  Method method = Method::kMv;
  std::size_t redundancy = 0;
  std::size_t count = 0;
  double mean = 0.0;
  /// Sample standard deviation / sqrt(count); absent for a single value.
  std::optional<double> std_error;
};

struct SweepResult {
  std::vector<SweepRecord> records;
  std::vector<CellAggregate> aggregates;

  bool all_ok() const {
    return std::all_of(records.begin(), records.end(), [](const SweepRecord& r) { return r.ok(); });
  }
};

struct MeanAndError {
  double mean = 0.0;
  std::optional<double> std_error;
};

inline MeanAndError aggregate(std::span<const double> values) {
  if (values.empty()) throw Error("aggregate: empty cell");
  MeanAndError out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const auto n = static_cast<double>(values.size());
    out.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return out;
}

/// Per-(method, r) aggregates over the successful records, in the order of spec.methods and spec.redundancies.
inline std::vector<CellAggregate> aggregate_records(const SweepSpec& spec, std::span<const SweepRecord> records) {
  std::vector<CellAggregate> out;
  for (Method method : spec.methods) {
    for (std::size_t r : spec.redundancies) {
      std::vector<double> values;
      for (const auto& rec : records) {
        if (rec.method == method && rec.redundancy == r && rec.ok()) values.push_back(rec.test_risk);
      }
      CellAggregate cell{method, r, values.size(), std::numeric_limits<double>::quiet_NaN(), std::nullopt};
      if (!values.empty()) {
        const auto agg = aggregate(values);
        cell.mean = agg.mean;
        cell.std_error = agg.std_error;
      }
      out.push_back(cell);
    }
  }
  return out;
}

/// Keeps r annotations per example chosen uniformly without replacement
/// (examples with at most r annotations are kept whole).
inline AnnotationSet subsample_annotations(const AnnotationSet& ann, std::size_t r, RngSeed seed) {
  if (r == 0) throw Error("subsample: r must be >= 1");
  Rng rng(seed);
  std::vector<Annotation> kept;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ann.num_examples(); ++i) {
    const auto records = ann.for_example(i);
    idx.resize(records.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t take = std::min(r, records.size());
    for (std::size_t j = 0; j < take; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.uniform_int(records.size() - j));
      std::swap(idx[j], idx[pick]);
    }
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    for (std::size_t j = 0; j < take; ++j) kept.push_back(records[idx[j]]);
  }
  return AnnotationSet(ann.num_examples(), ann.num_workers(), ann.num_classes(), std::move(kept));
}

/// Everything simulated for one (seed, r) cell.
struct SweepCellData {
  Dataset train;
  Dataset test;
  std::vector<ConfusionMatrix> workers;
  AnnotationSet annotations;
};

/// The test set and worker pool depend on the seed only; training data,
/// assignment and corruption also depend on r.
inline SweepCellData simulate_cell(const SweepSpec& spec, std::uint64_t seed, std::size_t r) {
  const RngSeed base{seed, 0};
  SweepCellData cell;
  cell.test = make_synthetic_dataset(spec.test_size, spec.num_classes, spec.dim, spec.margin,
                                     substream(base, StreamTag::kTestData));
  cell.train = make_synthetic_dataset(spec.train_size(r), spec.num_classes, spec.dim, spec.margin,
                                      substream(base, StreamTag::kTrainData, r));
  cell.workers = sample_worker_pool(spec.worker_model, spec.num_workers, substream(base, StreamTag::kWorkers));
  const Assignment assignment =
      assign_workers(spec.train_size(r), r, spec.num_workers, substream(base, StreamTag::kAssignment, r));
  cell.annotations = corrupt_labels(cell.train.truth, assignment, cell.workers, substream(base, StreamTag::kCorruption, r));
  return cell;
}

inline SweepRecord run_sweep_task(const SweepSpec& spec, Method method, std::size_t r, std::uint64_t seed) {
  SweepRecord rec;
  rec.method = method;
  rec.redundancy = r;
  rec.train_size = spec.train_size(r);
  rec.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    const SweepCellData cell = simulate_cell(spec, seed, r);
    MethodInputs extra{&cell.train.truth, cell.workers};
    const MethodOutput out = train_method(method, cell.train.features, cell.annotations, extra, spec.mbem,
                                          substream(RngSeed{seed, 0}, StreamTag::kLearner, r));
    rec.test_risk = zero_one_risk(out.model, cell.test.features, cell.test.truth);
    rec.train_risk = zero_one_risk(out.model, cell.train.features, cell.train.truth);
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  rec.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

namespace detail {

// Runs task(method, r, seed) for every cell on spec.jobs threads. Records come
// back in method-major, then r, then seed order whatever the completion order.
template <class TaskFn>
SweepResult run_cells(const SweepSpec& spec, TaskFn&& task) {
  struct Cell {
    Method method;
    std::size_t r;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Method method : spec.methods) {
    for (std::size_t r : spec.redundancies) {
      for (std::uint64_t seed : spec.seeds) cells.push_back({method, r, seed});
    }
  }

  SweepResult result;
  result.records.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      result.records[i] = task(cells[i].method, cells[i].r, cells[i].seed);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(spec.jobs, 1, cells.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  result.aggregates = aggregate_records(spec, result.records);
  return result;
}

}  // namespace detail

/// Runs every (method, r, seed) task of the synthetic fixed-budget sweep.
inline SweepResult run_sweep(const SweepSpec& spec) {
  spec.validate();
  return detail::run_cells(spec, [&](Method m, std::size_t r, std::uint64_t seed) {
    return run_sweep_task(spec, m, r, seed);
  });
}

/// A labelled dataset with more annotations per example than the sweep uses.
/// Without a test set, risks are measured on the training truth.
struct AnnotatedData {
  Matrix features;
  AnnotationSet annotations;
  Labels truth;
  Matrix test_features;
  Labels test_truth;
};

inline SweepRecord run_subsample_task(const SweepSpec& spec, const AnnotatedData& data, Method method, std::size_t r,
                                      std::uint64_t seed) {
  SweepRecord rec;
  rec.method = method;
  rec.redundancy = r;
  rec.train_size = data.truth.size();
  rec.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    const RngSeed base{seed, 0};
    const AnnotationSet ann = subsample_annotations(data.annotations, r, substream(base, StreamTag::kSubsample, r));
    MethodInputs extra{&data.truth, {}};
    const MethodOutput out =
        train_method(method, data.features, ann, extra, spec.mbem, substream(base, StreamTag::kLearner, r));
    rec.train_risk = zero_one_risk(out.model, data.features, data.truth);
    rec.test_risk = data.test_truth.empty() ? rec.train_risk
                                            : zero_one_risk(out.model, data.test_features, data.test_truth);
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  rec.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

/// Sweep over r by subsampling r annotations per example from `data`.
/// Budget, worker model and synthetic-data fields of `spec` are unused.
inline SweepResult run_subsample_sweep(const SweepSpec& spec, const AnnotatedData& data) {
  if (spec.redundancies.empty() || spec.methods.empty() || spec.seeds.empty()) {
    throw Error("sweep: redundancies, methods and seeds must be non-empty");
  }
  if (data.features.rows() != data.annotations.num_examples() || data.truth.size() != data.features.rows()) {
    throw Error("subsample sweep: features, annotations and truth disagree on n");
  }
  if (data.test_features.rows() != data.test_truth.size()) throw Error("subsample sweep: test features and truth disagree");
  spec.mbem.learner.validate();
  return detail::run_cells(spec, [&](Method m, std::size_t r, std::uint64_t seed) {
    return run_subsample_task(spec, data, m, r, seed);
  });
}

// ---------------------------------------------------------------------------
// Report files

inline constexpr const char* kSweepHeader = "method,r,n_train,seed,test_risk,train_risk,status";

namespace detail {

inline std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace detail

/// Writes sweep.csv, aggregate.csv, timings.csv and plotdata_<method>.csv.
/// sweep.csv depends only on the spec, never on timing or thread count.
inline void emit_report(const SweepResult& result, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());

  io::CsvWriter sweep(out_dir / "sweep.csv");
  sweep.line(kSweepHeader);
  io::CsvWriter timings(out_dir / "timings.csv");
  timings.line("method,r,seed,wall_time_seconds");
  for (const auto& rec : result.records) {
    const std::string key = to_string(rec.method) + "," + std::to_string(rec.redundancy);
    sweep.line(key + "," + std::to_string(rec.train_size) + "," + std::to_string(rec.seed) + "," +
               io::format_number(rec.test_risk, 17) + "," + io::format_number(rec.train_risk, 17) + "," +
               (rec.ok() ? std::string("ok") : "error: " + detail::csv_safe(rec.error)));
    timings.line(key + "," + std::to_string(rec.seed) + "," + io::format_number(rec.wall_time_seconds, 6));
  }
  sweep.close();
  timings.close();

  io::CsvWriter agg(out_dir / "aggregate.csv");
  agg.line("method,r,n_seeds,mean,stderr");
  for (const auto& cell : result.aggregates) {
    agg.line(to_string(cell.method) + "," + std::to_string(cell.redundancy) + "," + std::to_string(cell.count) + "," +
             io::format_number(cell.mean, 10) + "," + (cell.std_error ? io::format_number(*cell.std_error, 10) : ""));
  }
  agg.close();

  std::vector<Method> methods;
  for (const auto& cell : result.aggregates) {
    if (std::find(methods.begin(), methods.end(), cell.method) == methods.end()) methods.push_back(cell.method);
  }
  for (Method method : methods) {
    io::CsvWriter plot(out_dir / ("plotdata_" + to_string(method) + ".csv"));
    plot.line("r,mean,stderr");
    for (const auto& cell : result.aggregates) {
      if (cell.method != method) continue;
      plot.line(std::to_string(cell.redundancy) + "," + io::format_number(cell.mean, 6) + "," +
                (cell.std_error ? io::format_number(*cell.std_error, 6) : ""));
    }
    plot.close();
  }
}

/// Parses a sweep.csv written by emit_report (wall times are not stored there).
inline std::vector<SweepRecord> read_sweep_csv(const std::filesystem::path& path) {
  const io::CsvTable t = io::read_csv(path);
  io::require_header(t, {"method", "r", "n_train", "seed", "test_risk", "train_risk", "status"});
  std::vector<SweepRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::string where = t.source + ":" + std::to_string(i + 2);
    SweepRecord rec;
    rec.method = parse_method(row[0]);
    rec.redundancy = io::parse_index(row[1], where);
    rec.train_size = io::parse_index(row[2], where);
    rec.seed = io::parse_index(row[3], where);
    rec.test_risk = io::parse_real(row[4], where);
    rec.train_risk = io::parse_real(row[5], where);
    if (row[6] != "ok") rec.error = row[6].rfind("error: ", 0) == 0 ? row[6].substr(7) : row[6];
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

/// Applies the keys present in `j` on top of `spec`. Unknown keys are errors.
///
///   budget, redundancies, methods, num_workers, num_classes, dim, margin,
///   test_size, seeds, jobs,
///   worker_model: {kind, hammer_prob},
///   mbem: {rounds, prior, smoothing, clamp, em_max_iters, em_tol},
///   learner: {kind, l2_penalty, learning_rate, epochs, batch_size, hidden_units, init_scale}
inline void apply_sweep_config(const nlohmann::json& j, SweepSpec& spec) {
  auto reject_unknown = [](const nlohmann::json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw Error("sweep config: '" + where + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
        throw Error("sweep config: unknown key '" + key + "' in " + where);
      }
    }
  };
  try {
    reject_unknown(j,
                   {"budget", "redundancies", "methods", "num_workers", "num_classes", "dim", "margin", "test_size",
                    "seeds", "jobs", "worker_model", "mbem", "learner"},
                   "top level");
    if (j.contains("budget")) spec.budget = j["budget"].get<std::size_t>();
    if (j.contains("redundancies")) spec.redundancies = j["redundancies"].get<std::vector<std::size_t>>();
    if (j.contains("methods")) {
      spec.methods.clear();
      for (const auto& name : j["methods"]) spec.methods.push_back(parse_method(name.get<std::string>()));
    }
    if (j.contains("num_workers")) spec.num_workers = j["num_workers"].get<std::size_t>();
    if (j.contains("num_classes")) spec.num_classes = j["num_classes"].get<std::size_t>();
    if (j.contains("dim")) spec.dim = j["dim"].get<std::size_t>();
    if (j.contains("margin")) spec.margin = j["margin"].get<double>();
    if (j.contains("test_size")) spec.test_size = j["test_size"].get<std::size_t>();
    if (j.contains("seeds")) spec.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("jobs")) spec.jobs = j["jobs"].get<std::size_t>();
    spec.worker_model.num_classes = spec.num_classes;
    if (j.contains("worker_model")) {
      const auto& w = j["worker_model"];
      reject_unknown(w, {"kind", "hammer_prob"}, "worker_model");
      if (w.contains("kind")) spec.worker_model.kind = parse_skill_kind(w["kind"].get<std::string>());
      if (w.contains("hammer_prob")) spec.worker_model.hammer_prob = w["hammer_prob"].get<double>();
    }
    if (j.contains("mbem")) {
      const auto& m = j["mbem"];
      reject_unknown(m, {"rounds", "prior", "smoothing", "clamp", "em_max_iters", "em_tol"}, "mbem");
      if (m.contains("rounds")) spec.mbem.rounds = m["rounds"].get<std::size_t>();
      if (m.contains("prior")) {
        const auto prior = m["prior"].get<std::string>();
        if (prior != "uniform" && prior != "estimated") throw Error("sweep config: prior must be uniform or estimated");
        spec.mbem.prior_mode = prior == "uniform" ? PriorMode::kUniform : PriorMode::kEstimated;
      }
      if (m.contains("smoothing")) spec.mbem.smoothing = m["smoothing"].get<double>();
      if (m.contains("clamp")) spec.mbem.posterior.clamp = m["clamp"].get<double>();
      if (m.contains("em_max_iters")) spec.mbem.em_max_iters = m["em_max_iters"].get<std::size_t>();
      if (m.contains("em_tol")) spec.mbem.em_tol = m["em_tol"].get<double>();
    }
    if (j.contains("learner")) {
      const auto& l = j["learner"];
      reject_unknown(l, {"kind", "l2_penalty", "learning_rate", "epochs", "batch_size", "hidden_units", "init_scale"},
                     "learner");
      auto& cfg = spec.mbem.learner;
      if (l.contains("kind")) cfg.kind = parse_learner_kind(l["kind"].get<std::string>());
      if (l.contains("l2_penalty")) cfg.l2_penalty = l["l2_penalty"].get<double>();
      if (l.contains("learning_rate")) cfg.learning_rate = l["learning_rate"].get<double>();
      if (l.contains("epochs")) cfg.epochs = l["epochs"].get<std::size_t>();
      if (l.contains("batch_size")) cfg.batch_size = l["batch_size"].get<std::size_t>();
      if (l.contains("hidden_units")) cfg.hidden_units = l["hidden_units"].get<std::size_t>();
      if (l.contains("init_scale")) cfg.init_scale = l["init_scale"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("sweep config: ") + e.what());
  }
}

inline SweepSpec load_sweep_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  SweepSpec spec;
  apply_sweep_config(j, spec);
  return spec;
}

}  // namespace mbem

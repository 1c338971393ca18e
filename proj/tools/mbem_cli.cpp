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

// mbem: simulate crowd labels, train with MBEM or a baseline, evaluate the
// redundancy bound and run fixed-budget sweeps.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mbem/mbem.hpp"

namespace fs = std::filesystem;
using namespace mbem;

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
}

struct SimulateArgs {
  std::size_t n = 1000, classes = 2, dim = 10, workers = 10, r = 1;
  double margin = 2.0, hammer_prob = 0.2;
  std::string worker_model = "hammer-spammer";
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

int cmd_simulate(const SimulateArgs& a) {
  const RngSeed base{a.seed, 0};
  const auto data = make_synthetic_dataset(a.n, a.classes, a.dim, a.margin, substream(base, StreamTag::kTrainData));
  const auto pool = sample_worker_pool({parse_skill_kind(a.worker_model), a.hammer_prob, a.classes}, a.workers,
                                       substream(base, StreamTag::kWorkers));
  const auto assignment = assign_workers(a.n, a.r, a.workers, substream(base, StreamTag::kAssignment));
  const auto ann = corrupt_labels(data.truth, assignment, pool, substream(base, StreamTag::kCorruption));
  const fs::path out(a.out_dir);
  make_dir(out);
  io::write_features(out / "features.csv", data.features);
  io::write_truth(out / "truth.csv", data.truth);
  io::write_annotations(out / "annotations.csv", ann);
  io::write_confusions(out / "workers.csv", pool);
  std::cerr << "wrote " << a.n << " examples, " << ann.size() << " annotations to " << out.string() << "\n";
  return 0;
}

struct LearnerArgs {
  std::string kind = "logistic";
  LearnerConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--learner", kind, "logistic or mlp")->capture_default_str();
    app->add_option("--l2", cfg.l2_penalty, "L2 penalty")->capture_default_str();
    app->add_option("--lr", cfg.learning_rate, "learning rate")->capture_default_str();
    app->add_option("--epochs", cfg.epochs, "training epochs")->capture_default_str();
    app->add_option("--batch-size", cfg.batch_size, "mini-batch size, 0 for full batch")->capture_default_str();
    app->add_option("--hidden-units", cfg.hidden_units, "MLP hidden width")->capture_default_str();
  }
  LearnerConfig resolve() const {
    LearnerConfig out = cfg;
    out.kind = parse_learner_kind(kind);
    return out;
  }
};

PriorMode parse_prior(const std::string& s) {
  if (s == "uniform") return PriorMode::kUniform;
  if (s == "estimated") return PriorMode::kEstimated;
  throw Error("--prior must be uniform or estimated");
}

struct TrainArgs {
  std::string annotations, features, truth, confusions;
  std::string method = "mbem", prior = "uniform";
  std::size_t rounds = 2;
  double smoothing = 1.0;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  LearnerArgs learner;
};

int cmd_train(const TrainArgs& a) {
  const Method method = parse_method(a.method);
  const Matrix features = io::read_features(a.features);
  const AnnotationSet ann = io::read_annotations(a.annotations, features.rows());
  std::optional<Labels> truth;
  if (!a.truth.empty()) truth = io::read_truth(a.truth);
  std::vector<ConfusionMatrix> true_conf;
  if (!a.confusions.empty()) true_conf = io::read_confusions(a.confusions);

  MbemConfig cfg;
  cfg.rounds = a.rounds;
  cfg.prior_mode = parse_prior(a.prior);
  cfg.smoothing = a.smoothing;
  cfg.learner = a.learner.resolve();
  const MethodInputs extra{truth ? &*truth : nullptr, true_conf};
  const MethodOutput out = train_method(method, features, ann, extra, cfg, RngSeed{a.seed, 0});

  const fs::path dir(a.out_dir);
  make_dir(dir);
  io::write_checkpoint(dir / "model", out.model);
  // Methods other than mbem get their worker estimates from the trained model.
  const auto confusions = out.confusions.empty()
                              ? estimate_confusions_and_prior(ann, predict_labels(out.model, features), cfg.smoothing)
                                    .confusions
                              : out.confusions;
  io::write_confusions(dir / "confusions.csv", confusions);
  io::write_soft_labels(dir / "posteriors.csv",
                        out.soft.rows.rows() ? out.soft : SoftLabels{predict_proba(out.model, features)});
  if (truth) {
    std::cout << "train_risk," << io::format_number(zero_one_risk(out.model, features, *truth), 6) << "\n";
  }
  return 0;
}

struct BoundArgs {
  std::optional<double> rho;
  double epsilon = 0.0, grid_step = 0.025;
  std::size_t r_max = 9;
};

int cmd_bound(const BoundArgs& a) {
  std::vector<double> rhos;
  if (a.rho) {
    rhos.push_back(*a.rho);
  } else {
    if (!(a.grid_step > 0.0)) throw Error("--grid-step must be positive");
    for (std::size_t i = 0; i * a.grid_step + a.epsilon < 0.5; ++i) rhos.push_back(i * a.grid_step);
  }
  std::cout << "rho,r,beta,factor,is_optimal\n";
  for (double rho : rhos) {
    const std::size_t best = optimal_redundancy(rho, a.epsilon, a.r_max);
    for (std::size_t r = 1; r <= a.r_max; ++r) {
      std::cout << io::format_number(rho, 6) << "," << r << ","
                << io::format_number(beta_eps_closed_form(rho, a.epsilon, r), 10) << ","
                << io::format_number(bound_factor(rho, a.epsilon, r), 10) << "," << (r == best ? 1 : 0) << "\n";
    }
  }
  return 0;
}

struct SweepArgs {
  std::string config;
  std::optional<std::size_t> budget, jobs;
  std::vector<std::size_t> redundancies, subsample_r;
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "sweep_out";
  std::string annotations, features, truth, test_features, test_truth;
};

int cmd_sweep(const SweepArgs& a) {
  SweepSpec spec = a.config.empty() ? SweepSpec{} : load_sweep_config(a.config);
  if (a.budget) spec.budget = *a.budget;
  if (a.jobs) spec.jobs = *a.jobs;
  if (!a.redundancies.empty()) spec.redundancies = a.redundancies;
  if (!a.methods.empty()) {
    spec.methods.clear();
    for (const auto& m : a.methods) spec.methods.push_back(parse_method(m));
  }
  if (!a.seeds.empty()) spec.seeds = a.seeds;

  SweepResult result;
  if (!a.subsample_r.empty()) {
    if (a.annotations.empty() || a.features.empty() || a.truth.empty()) {
      throw Error("--subsample-r needs --annotations, --features and --truth");
    }
    spec.redundancies = a.subsample_r;
    AnnotatedData data;
    data.features = io::read_features(a.features);
    data.annotations = io::read_annotations(a.annotations, data.features.rows());
    data.truth = io::read_truth(a.truth);
    if (!a.test_features.empty() || !a.test_truth.empty()) {
      if (a.test_features.empty() || a.test_truth.empty()) throw Error("give both --test-features and --test-truth");
      data.test_features = io::read_features(a.test_features);
      data.test_truth = io::read_truth(a.test_truth);
    }
    result = run_subsample_sweep(spec, data);
  } else {
    result = run_sweep(spec);
  }
  emit_report(result, a.out_dir);
  std::size_t failed = 0;
  for (const auto& rec : result.records) {
    if (!rec.ok()) {
      ++failed;
      std::cerr << "cell " << to_string(rec.method) << " r=" << rec.redundancy << " seed=" << rec.seed
                << " failed: " << rec.error << "\n";
    }
  }
  for (const auto& cell : result.aggregates) {
    std::cout << to_string(cell.method) << " r=" << cell.redundancy << " mean test risk "
              << io::format_number(cell.mean, 4) << " over " << cell.count << " seeds\n";
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-bootstrapped EM for learning from noisy crowd labels"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "generate synthetic features, truth, workers and annotations");
  s->add_option("--n", sim.n, "number of examples")->capture_default_str();
  s->add_option("--classes", sim.classes, "number of classes")->capture_default_str();
  s->add_option("--dim", sim.dim, "feature dimension")->capture_default_str();
  s->add_option("--margin", sim.margin, "class separation")->capture_default_str();
  s->add_option("--workers", sim.workers, "worker pool size")->capture_default_str();
  s->add_option("--r", sim.r, "annotations per example")->capture_default_str();
  s->add_option("--hammer-prob", sim.hammer_prob, "probability a worker (or row) is a hammer")->capture_default_str();
  s->add_option("--worker-model", sim.worker_model, "hammer-spammer or classwise-hammer-spammer")->capture_default_str();
  s->add_option("--seed", sim.seed, "random seed")->capture_default_str();
  s->add_option("--out-dir", sim.out_dir, "output directory")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a classifier from annotations");
  t->add_option("--annotations", tr.annotations, "annotations.csv")->required();
  t->add_option("--features", tr.features, "features.csv")->required();
  t->add_option("--method", tr.method, "mv, em, weighted-mv, weighted-em, mbem, oracle-weighted-em, oracle-correct, truth")
      ->capture_default_str();
  t->add_option("--rounds", tr.rounds, "MBEM rounds")->capture_default_str();
  t->add_option("--prior", tr.prior, "uniform or estimated")->capture_default_str();
  t->add_option("--smoothing", tr.smoothing, "Laplace smoothing of confusion estimates")->capture_default_str();
  t->add_option("--seed", tr.seed, "random seed")->capture_default_str();
  t->add_option("--out-dir", tr.out_dir, "output directory")->capture_default_str();
  t->add_option("--truth", tr.truth, "truth.csv (oracle-correct, truth; also reports training risk)");
  t->add_option("--confusions", tr.confusions, "true worker confusions (oracle-weighted-em)");
  tr.learner.add(t);

  BoundArgs bd;
  auto* b = app.add_subcommand("bound", "tabulate the redundancy bound factor");
  b->add_option("--rho", bd.rho, "single flip probability; omit for a grid");
  b->add_option("--epsilon", bd.epsilon, "confusion estimation error")->capture_default_str();
  b->add_option("--r-max", bd.r_max, "largest redundancy")->capture_default_str();
  b->add_option("--grid-step", bd.grid_step, "rho grid spacing")->capture_default_str();

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "fixed-budget sweep over redundancy");
  w->add_option("--config", sw.config, "JSON config file");
  w->add_option("--budget", sw.budget, "total annotation budget");
  w->add_option("--redundancies", sw.redundancies, "redundancy levels")->delimiter(',');
  w->add_option("--methods", sw.methods, "methods")->delimiter(',');
  w->add_option("--seeds", sw.seeds, "seeds")->delimiter(',');
  w->add_option("--jobs", sw.jobs, "worker threads");
  w->add_option("--out-dir", sw.out_dir, "output directory")->capture_default_str();
  w->add_option("--subsample-r", sw.subsample_r, "subsample these r from --annotations instead of simulating")
      ->delimiter(',');
  w->add_option("--annotations", sw.annotations, "annotations.csv for --subsample-r");
  w->add_option("--features", sw.features, "features.csv for --subsample-r");
  w->add_option("--truth", sw.truth, "truth.csv for --subsample-r");
  w->add_option("--test-features", sw.test_features, "held-out features for --subsample-r");
  w->add_option("--test-truth", sw.test_truth, "held-out truth for --subsample-r");

  CLI11_PARSE(app, argc, argv);
  try {
    if (s->parsed()) return cmd_simulate(sim);
    if (t->parsed()) return cmd_train(tr);
    if (b->parsed()) return cmd_bound(bd);
    if (w->parsed()) return cmd_sweep(sw);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

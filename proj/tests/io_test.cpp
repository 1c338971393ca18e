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

#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mbem/io.hpp"
#include "mbem/simulate.hpp"
#include "test_util.hpp"

using namespace mbem;
using testutil::TempDir;

TEST(Csv, SplitTrimsSpacesAndCarriageReturns) {
  EXPECT_EQ(io::split_fields("a, b ,c\r"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(io::split_fields(""), (std::vector<std::string>{""}));
  EXPECT_EQ(io::split_fields("x,,y"), (std::vector<std::string>{"x", "", "y"}));
}

TEST(Csv, RaggedRowIsAnError) {
  TempDir dir("io");
  testutil::write_text(dir / "bad.csv", "a,b\n1,2\n3\n");
  EXPECT_THROW(io::read_csv(dir / "bad.csv"), Error);
  testutil::write_text(dir / "empty.csv", "");
  EXPECT_THROW(io::read_csv(dir / "empty.csv"), Error);
  EXPECT_THROW(io::read_csv(dir / "missing.csv"), Error);
}

TEST(Csv, ParseNumbers) {
  EXPECT_EQ(io::parse_index("42", "t"), 42u);
  EXPECT_THROW(io::parse_index("-1", "t"), Error);
  EXPECT_THROW(io::parse_index("4x", "t"), Error);
  EXPECT_EQ(io::parse_real("0.25", "t"), 0.25);
  EXPECT_THROW(io::parse_real("", "t"), Error);
  EXPECT_THROW(io::parse_real("nope", "t"), Error);
}

TEST(Annotations, RoundTripPreservesOrderAndDimensions) {
  TempDir dir("io");
  const auto data = make_synthetic_dataset(40, 3, 3, 1.0, {1, 0});
  const auto pool = sample_worker_pool({SkillKind::kHammerSpammer, 0.5, 3}, 6, {1, 1});
  const auto ann = corrupt_labels(data.truth, assign_workers(40, 3, 6, {1, 2}), pool, {1, 3});
  io::write_annotations(dir / "a.csv", ann);
  EXPECT_EQ(io::read_annotations(dir / "a.csv", 40, 6, 3), ann);
  EXPECT_EQ(testutil::slurp(dir / "a.csv").substr(0, 26), "example_id,worker_id,label");
}

TEST(Annotations, InfersDimensionsAndChecksHeader) {
  TempDir dir("io");
  testutil::write_text(dir / "a.csv", "example_id,worker_id,label\n0,2,1\n1,0,0\n");
  const auto ann = io::read_annotations(dir / "a.csv");
  EXPECT_EQ(ann.num_examples(), 2u);
  EXPECT_EQ(ann.num_workers(), 3u);
  EXPECT_EQ(ann.num_classes(), 2u);
  testutil::write_text(dir / "b.csv", "example,worker,label\n0,0,0\n");
  EXPECT_THROW(io::read_annotations(dir / "b.csv"), Error);
  testutil::write_text(dir / "c.csv", "example_id,worker_id,label\n0,0,5\n");
  EXPECT_THROW(io::read_annotations(dir / "c.csv", 1, 1, 3), Error);
}

TEST(Truth, RoundTripAndPermutationCheck) {
  TempDir dir("io");
  const Labels truth{2, 0, 1, 1};
  io::write_truth(dir / "t.csv", truth);
  EXPECT_EQ(io::read_truth(dir / "t.csv"), truth);
  testutil::write_text(dir / "dup.csv", "example_id,label\n0,1\n0,1\n");
  EXPECT_THROW(io::read_truth(dir / "dup.csv"), Error);
}

TEST(Features, RoundTripIsExact) {
  TempDir dir("io");
  const auto data = make_synthetic_dataset(25, 2, 4, 2.0, {2, 0});
  io::write_features(dir / "x.csv", data.features);
  EXPECT_EQ(io::read_features(dir / "x.csv"), data.features);
}

TEST(Features, RowsMayComeInAnyOrder) {
  TempDir dir("io");
  testutil::write_text(dir / "x.csv", "example_id,x0,x1\n1,3,4\n0,1,2\n");
  const Matrix x = io::read_features(dir / "x.csv");
  EXPECT_EQ(x(0, 0), 1.0);
  EXPECT_EQ(x(1, 1), 4.0);
  testutil::write_text(dir / "y.csv", "id,x0\n0,1\n");
  EXPECT_THROW(io::read_features(dir / "y.csv"), Error);
}

TEST(SoftLabelsFile, RoundTripAtTwelveDigits) {
  TempDir dir("io");
  SoftLabels soft{Matrix(3, 2)};
  soft.rows(0, 0) = 1.0 / 3.0;
  soft.rows(0, 1) = 2.0 / 3.0;
  soft.rows(1, 0) = 1.0;
  soft.rows(2, 1) = 1.0;
  io::write_soft_labels(dir / "p.csv", soft);
  const auto back = io::read_soft_labels(dir / "p.csv");
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(back.rows(i, k), soft.rows(i, k), 1e-12);
  }
  EXPECT_EQ(testutil::slurp(dir / "p.csv").substr(0, 20), "example_id,p0,p1\n0,0");
}

TEST(ConfusionsFile, RoundTrip) {
  TempDir dir("io");
  const auto pool = sample_worker_pool({SkillKind::kClasswiseHammerSpammer, 0.5, 3}, 4, {3, 0});
  std::vector<ConfusionMatrix> with_noise = pool;
  with_noise.push_back(ConfusionMatrix::from_rows({{0.7, 0.2, 0.1}, {0.1, 0.8, 0.1}, {0.25, 0.25, 0.5}}));
  io::write_confusions(dir / "c.csv", with_noise);
  const auto back = io::read_confusions(dir / "c.csv");
  ASSERT_EQ(back.size(), with_noise.size());
  for (std::size_t a = 0; a < back.size(); ++a) EXPECT_LE(max_abs_diff(back[a], with_noise[a]), 1e-12);
}

TEST(ConfusionsFile, MissingRowMassIsRejected) {
  TempDir dir("io");
  testutil::write_text(dir / "c.csv", "worker_id,k,s,prob\n0,0,0,1\n0,1,1,0.5\n");
  EXPECT_THROW(io::read_confusions(dir / "c.csv"), Error);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("io");
  for (auto kind : {LearnerKind::kLogistic, LearnerKind::kMlp}) {
    LearnerConfig cfg;
    cfg.kind = kind;
    cfg.hidden_units = 7;
    const auto model = random_model(cfg, 4, 5, 2.0, {4, static_cast<std::uint64_t>(kind)});
    const auto stem = dir / ("model_" + to_string(kind));
    io::write_checkpoint(stem, model);
    const auto back = io::read_checkpoint(stem);
    EXPECT_EQ(back, model);
    Matrix x(10, 5);
    Rng rng({4, 9});
    for (double& v : x.data()) v = rng.normal();
    EXPECT_EQ(predict_proba(back, x), predict_proba(model, x));
  }
}

TEST(Checkpoint, MetadataMismatchIsAnError) {
  TempDir dir("io");
  const auto model = zero_model(LearnerKind::kLogistic, 2, 3);
  io::write_checkpoint(dir / "m", model);
  testutil::write_text(dir / "m.meta.csv", "kind,K,d,hidden_units\nmultinomial_logistic,2,4,0\n");
  EXPECT_THROW(io::read_checkpoint(dir / "m"), Error);
  testutil::write_text(dir / "m.meta.csv", "kind,K,d,hidden_units\nsvm,2,3,0\n");
  EXPECT_THROW(io::read_checkpoint(dir / "m"), Error);
}

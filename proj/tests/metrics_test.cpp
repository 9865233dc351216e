// Copyright 2026 The milab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "milab/metrics.hpp"
#include "milab/rng.hpp"

using namespace milab;

namespace {

FeatureSet make_features(const std::vector<std::vector<double>>& rows,
                         const std::vector<std::uint32_t>& labels = {}) {
  FeatureSet set;
  set.n = static_cast<int>(rows.size());
  set.feature_dim = static_cast<int>(rows[0].size());
  for (const auto& row : rows)
    set.features.insert(set.features.end(), row.begin(), row.end());
  set.labels = labels.empty() ? std::vector<std::uint32_t>(rows.size(), 0) : labels;
  return set;
}

}  // namespace

TEST_CASE("tradeoff delta: reference values reproduce to within 0.01") {
  // Every numeric trade-off entry of the published VGG16 comparison table,
  // recomputed here from its accuracy columns.
  struct Row {
    double acc_nodef, attacc_nodef, acc_def, attacc_def, expected;
  };
  const Row rows[] = {
      // LOMMA+GMI block
      {86.90, 74.53, 79.16, 54.53, 2.58},
      {86.90, 74.53, 79.85, 53.73, 2.95},
      {86.90, 74.53, 79.85, 31.93, 6.04},
      // LOMMA+KedMI block
      {86.90, 81.80, 79.16, 67.20, 1.89},
      {86.90, 81.80, 79.85, 63.00, 2.67},
      {86.90, 81.80, 79.85, 43.07, 5.49},
      // PLGMI block
      {86.90, 97.47, 79.16, 93.00, 0.58},
      {86.90, 97.47, 79.85, 92.40, 0.72},
      {86.90, 97.47, 79.85, 66.60, 4.38},
      // GMI block
      {86.90, 20.07, 79.16, 20.93, -0.11},
      {86.90, 20.07, 79.85, 6.13, 1.98},
      {86.90, 20.07, 79.85, 3.20, 2.39},
      // KedMI block
      {86.90, 78.47, 79.16, 53.33, 3.25},
      {86.90, 78.47, 79.85, 43.53, 4.96},
      {86.90, 78.47, 79.85, 34.73, 6.20},
      // BREPMI block
      {86.90, 57.40, 79.16, 39.20, 2.35},
      {86.90, 57.40, 79.85, 37.40, 2.84},
      {86.90, 57.40, 79.85, 21.73, 5.06},
  };
  for (const Row& row : rows) {
    const DeltaResult delta =
        tradeoff_delta(row.acc_nodef, row.attacc_nodef, row.acc_def, row.attacc_def);
    REQUIRE(delta.value.has_value());
    CHECK(std::abs(*delta.value - row.expected) <= 0.01);
  }
}

TEST_CASE("tradeoff delta: OP and degenerate conventions") {
  const DeltaResult op = tradeoff_delta(90, 50, 92, 20);
  CHECK_FALSE(op.value.has_value());
  CHECK(op.outperforms);
  CHECK_FALSE(op.degenerate);
  CHECK(render_delta(op) == "OP");

  const DeltaResult equal_acc = tradeoff_delta(90, 50, 90, 20);
  CHECK_FALSE(equal_acc.value.has_value());
  CHECK(equal_acc.degenerate);

  const DeltaResult equal_all = tradeoff_delta(90, 50, 90, 50);
  CHECK_FALSE(equal_all.value.has_value());
  CHECK_FALSE(equal_all.degenerate);

  CHECK_THROWS_AS(tradeoff_delta(101, 50, 90, 20), ConfigError);
  CHECK_THROWS_AS(tradeoff_delta(90, -1, 90, 20), ConfigError);

  CHECK(render_delta(tradeoff_delta(86.90, 81.80, 79.85, 43.07)) == "5.49");
  CHECK(render_delta(DeltaResult{}) == "-");  // no baseline available
}

TEST_CASE("frechet distance: identical sets give zero") {
  Rng rng(5);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> row(6);
    for (auto& v : row) v = rng.normal();
    rows.push_back(row);
  }
  const FeatureSet a = make_features(rows);
  const FeatureSet b = make_features(rows);
  CHECK(frechet_feature_distance(a, b) <= 1e-6);
}

TEST_CASE("frechet distance: equal covariance reduces to mean shift") {
  Rng rng(9);
  std::vector<std::vector<double>> rows_a, rows_b;
  const std::vector<double> shift = {0.8, -1.5, 2.0};
  for (int i = 0; i < 60; ++i) {
    std::vector<double> row(3);
    for (auto& v : row) v = rng.normal();
    rows_a.push_back(row);
    std::vector<double> shifted = row;
    for (int d = 0; d < 3; ++d) shifted[d] += shift[d];
    rows_b.push_back(shifted);
  }
  const double expected = 0.8 * 0.8 + 1.5 * 1.5 + 2.0 * 2.0;
  const double ffd =
      frechet_feature_distance(make_features(rows_a), make_features(rows_b));
  CHECK(ffd == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("frechet distance: 1-D closed form (sigma1 - sigma2)^2") {
  // two-point sets with exact maximum-likelihood moments: var {1, 4}
  const FeatureSet a = make_features({{-1.0}, {1.0}});
  const FeatureSet b = make_features({{-2.0}, {2.0}});
  const double ffd = frechet_feature_distance(a, b);
  CHECK(ffd == doctest::Approx(1.0).epsilon(1e-6));  // (1 - 2)^2
}

TEST_CASE("frechet distance: symmetry and shrinkage behavior") {
  Rng rng(11);
  std::vector<std::vector<double>> rows_a, rows_b;
  for (int i = 0; i < 12; ++i) {  // fewer rows than dim: rank-deficient
    std::vector<double> a_row(16), b_row(16);
    for (auto& v : a_row) v = rng.normal();
    for (auto& v : b_row) v = 0.5 * rng.normal() + 0.3;
    rows_a.push_back(a_row);
    rows_b.push_back(b_row);
  }
  const FeatureSet a = make_features(rows_a);
  const FeatureSet b = make_features(rows_b);
  const double ab = frechet_feature_distance(a, b);
  const double ba = frechet_feature_distance(b, a);
  CHECK(std::abs(ab - ba) <= 1e-6);
  CHECK(ab >= 0.0);
  CHECK_THROWS_AS(frechet_feature_distance(a, b, false), DegenerateError);

  const FeatureSet mismatched = make_features({{1.0, 2.0}, {0.5, 0.1}, {0.3, 0.2}});
  CHECK_THROWS_AS(frechet_feature_distance(a, mismatched), ShapeError);
}

TEST_CASE("attack accuracy: counting and permutation invariance") {
  const auto model = build_model<float>(arch::classifier_small(1, 16, 16, 4), 3);
  ImageBatch recon(10, 1, 16, 16);
  Rng rng(21);
  for (auto& v : recon.data) v = static_cast<float>(rng.uniform());
  // label three of them as whatever the model predicts, the rest wrong
  const auto predictions = classify(model, recon);
  for (int i = 0; i < 10; ++i)
    recon.labels[i] = i < 3 ? predictions[i] : (predictions[i] + 1) % 4;
  const AttackAccuracy acc = attack_accuracy(model, recon);
  CHECK(acc.value == doctest::Approx(0.3));
  CHECK(acc.ci_half_width ==
        doctest::Approx(1.96 * std::sqrt(0.3 * 0.7 / 10.0)));

  // permuting samples changes nothing
  ImageBatch shuffled(10, 1, 16, 16);
  const std::vector<int> perm = {7, 2, 9, 0, 4, 1, 8, 3, 6, 5};
  for (int i = 0; i < 10; ++i) {
    std::copy_n(recon.image(perm[i]), recon.pixels_per_image(), shuffled.image(i));
    shuffled.labels[i] = recon.labels[perm[i]];
  }
  CHECK(attack_accuracy(model, shuffled).value == doctest::Approx(0.3));

  // all-correct labels give 1.0
  ImageBatch all_correct = recon;
  for (int i = 0; i < 10; ++i) all_correct.labels[i] = predictions[i];
  CHECK(attack_accuracy(model, all_correct).value == doctest::Approx(1.0));
}

TEST_CASE("attack accuracy on the private images equals plain accuracy") {
  const auto model = build_model<float>(arch::classifier_small(1, 16, 16, 4), 6);
  ImageBatch privates(12, 1, 16, 16);
  Rng rng(33);
  for (auto& v : privates.data) v = static_cast<float>(rng.uniform());
  for (int i = 0; i < 12; ++i) privates.labels[i] = static_cast<std::uint32_t>(i % 4);
  CHECK(attack_accuracy(model, privates).value ==
        doctest::Approx(accuracy(model, privates)));
}

TEST_CASE("knn distance: exact arithmetic cases") {
  // identical reconstruction: distance 0
  const auto model = build_model<float>(arch::classifier_small(1, 16, 16, 4), 8);
  ImageBatch privates(8, 1, 16, 16);
  Rng rng(41);
  for (auto& v : privates.data) v = static_cast<float>(rng.uniform());
  for (int i = 0; i < 8; ++i) privates.labels[i] = static_cast<std::uint32_t>(i % 4);
  ImageBatch recon(1, 1, 16, 16);
  std::copy_n(privates.image(2), privates.pixels_per_image(), recon.image(0));
  recon.labels[0] = privates.labels[2];
  CHECK(knn_distance(model, recon, privates) == doctest::Approx(0.0).epsilon(1e-9));

  // missing identity
  ImageBatch orphan = recon;
  orphan.labels[0] = 3;
  ImageBatch no_three = privates;
  for (auto& label : no_three.labels)
    if (label == 3) label = 0;
  CHECK_THROWS_AS(knn_distance(model, orphan, no_three), MissingIdentityError);
}

TEST_CASE("knn distance: euclidean arithmetic on crafted features") {
  // feature dim 2, recon (0,0), same-identity privates {(3,4), (6,8)} -> 5.
  // exercised directly against the formula on raw feature sets
  const FeatureSet recon = make_features({{0.0, 0.0}}, {0});
  const FeatureSet priv = make_features({{3.0, 4.0}, {6.0, 8.0}}, {0, 0});
  double best = 1e300;
  for (int p = 0; p < priv.n; ++p) {
    double d2 = 0.0;
    for (int d = 0; d < 2; ++d) {
      const double diff = recon.feature_row(0)[d] - priv.feature_row(p)[d];
      d2 += diff * diff;
    }
    best = std::min(best, d2);
  }
  CHECK(std::sqrt(best) == doctest::Approx(5.0));
}

TEST_CASE("knn distance: other identities' samples cannot change it") {
  const auto model = build_model<float>(arch::classifier_small(1, 16, 16, 4), 8);
  ImageBatch privates(8, 1, 16, 16);
  Rng rng(51);
  for (auto& v : privates.data) v = static_cast<float>(rng.uniform());
  for (int i = 0; i < 8; ++i) privates.labels[i] = static_cast<std::uint32_t>(i % 2);
  ImageBatch recon(2, 1, 16, 16);
  for (auto& v : recon.data) v = static_cast<float>(rng.uniform());
  recon.labels = {0, 1};
  const double base = knn_distance(model, recon, privates);

  ImageBatch extended(12, 1, 16, 16);
  std::copy(privates.data.begin(), privates.data.end(), extended.data.begin());
  std::copy(privates.labels.begin(), privates.labels.end(), extended.labels.begin());
  for (int i = 8; i < 12; ++i) {
    for (std::size_t p = 0; p < extended.pixels_per_image(); ++p)
      extended.image(i)[p] = static_cast<float>(rng.uniform());
    extended.labels[i] = 3;  // identity not referenced by any reconstruction
  }
  CHECK(knn_distance(model, recon, extended) == doctest::Approx(base));
}

TEST_CASE("metrics report serializes with the fixed schema") {
  MetricsReport report;
  report.acc = 0.97;
  report.att_acc = 0.42;
  report.att_acc_ci = 0.05;
  report.knn_dist = 3.2;
  report.delta = tradeoff_delta(90, 60, 92, 30);
  report.ffd = 1.5;
  report.provenance = {{"target", "abc"}};
  const nlohmann::json j = metrics_to_json(report);
  for (const char* key :
       {"acc", "att_acc", "att_acc_ci", "knn_dist", "delta", "ffd",
        "hull_iou_recon_priv", "hull_iou_recon_re", "hull_iou_re_priv",
        "provenance"})
    CHECK(j.contains(key));
  CHECK(j["delta"].is_null());  // OP case
  report.delta = tradeoff_delta(90, 60, 80, 30);
  CHECK(metrics_to_json(report)["delta"].get<double>() == doctest::Approx(3.0));
}

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

#include "milab/featspace.hpp"
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

HullPolygon square(double x0, double y0, double side) {
  return convex_hull({{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}});
}

}  // namespace

TEST_CASE("pca: axis-aligned data explains everything with one component") {
  const FeatureSet set = make_features({{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}, {5.0, 0.0}});
  const Projection2D p = pca_project({{FeatureGroup::kPrivate, &set}});
  CHECK(p.explained[0] == doctest::Approx(1.0));
  CHECK(p.explained[1] == doctest::Approx(0.0));
  CHECK(p.explained[0] >= p.explained[1]);
}

TEST_CASE("pca: basis columns are orthonormal and sign-fixed") {
  Rng rng(3);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> row(7);
    for (auto& v : row) v = rng.normal();
    rows.push_back(row);
  }
  const FeatureSet set = make_features(rows);
  const Projection2D p = pca_project({{FeatureGroup::kPrivate, &set}});
  double n1 = 0.0, n2 = 0.0, dot = 0.0;
  for (int d = 0; d < 7; ++d) {
    n1 += p.basis[d * 2] * p.basis[d * 2];
    n2 += p.basis[d * 2 + 1] * p.basis[d * 2 + 1];
    dot += p.basis[d * 2] * p.basis[d * 2 + 1];
  }
  CHECK(n1 == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(n2 == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(dot) <= 1e-6);
  for (int comp = 0; comp < 2; ++comp) {
    int largest = 0;
    for (int d = 1; d < 7; ++d)
      if (std::abs(p.basis[d * 2 + comp]) > std::abs(p.basis[largest * 2 + comp]))
        largest = d;
    CHECK(p.basis[largest * 2 + comp] > 0.0);
  }
}

TEST_CASE("pca: projection preserves distances for intrinsically 2-D data") {
  // embed 2-D coordinates into R^5 along two orthonormal directions
  const double u[5] = {0.6, 0.0, 0.8, 0.0, 0.0};
  const double v[5] = {0.0, 1.0, 0.0, 0.0, 0.0};
  Rng rng(17);
  std::vector<std::vector<double>> rows;
  std::vector<Point2> planar;
  for (int i = 0; i < 24; ++i) {
    const double a = rng.uniform(-2.0, 2.0);
    const double b = rng.uniform(-1.0, 1.0);
    planar.push_back({a, b});
    std::vector<double> row(5);
    for (int d = 0; d < 5; ++d) row[d] = 3.0 + a * u[d] + b * v[d];
    rows.push_back(row);
  }
  const FeatureSet set = make_features(rows);
  const Projection2D p = pca_project({{FeatureGroup::kPrivate, &set}});
  for (int i = 0; i < 24; ++i)
    for (int j = i + 1; j < 24; ++j) {
      const double original = std::hypot(planar[i].x - planar[j].x,
                                         planar[i].y - planar[j].y);
      const double projected = std::hypot(p.points[i].x - p.points[j].x,
                                          p.points[i].y - p.points[j].y);
      REQUIRE(projected == doctest::Approx(original).epsilon(1e-9));
    }
}

TEST_CASE("pca: duplicating every row changes nothing") {
  Rng rng(23);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> row(4);
    for (auto& v : row) v = rng.normal();
    rows.push_back(row);
  }
  std::vector<std::vector<double>> doubled = rows;
  doubled.insert(doubled.end(), rows.begin(), rows.end());
  const FeatureSet once = make_features(rows);
  const FeatureSet twice = make_features(doubled);
  const Projection2D p1 = pca_project({{FeatureGroup::kPrivate, &once}});
  const Projection2D p2 = pca_project({{FeatureGroup::kPrivate, &twice}});
  for (std::size_t d = 0; d < p1.basis.size(); ++d)
    REQUIRE(p1.basis[d] == doctest::Approx(p2.basis[d]).epsilon(1e-9));
  for (int i = 0; i < 20; ++i) {
    REQUIRE(p1.points[i].x == doctest::Approx(p2.points[i].x).epsilon(1e-9));
    REQUIRE(p1.points[i].y == doctest::Approx(p2.points[i].y).epsilon(1e-9));
  }
}

TEST_CASE("pca: degenerate inputs") {
  const FeatureSet same = make_features({{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}});
  CHECK_THROWS_AS(pca_project({{FeatureGroup::kPrivate, &same}}), DegenerateError);
  const FeatureSet two = make_features({{1.0, 1.0}, {2.0, 1.0}});
  CHECK_THROWS_AS(pca_project({{FeatureGroup::kPrivate, &two}}), DegenerateError);
}

TEST_CASE("convex hull: unit square plus center point") {
  const HullPolygon hull = convex_hull(
      {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}});
  CHECK(hull.vertices.size() == 4);
  CHECK(hull.area == doctest::Approx(1.0));
}

TEST_CASE("convex hull: collinear points collapse to zero area") {
  const HullPolygon hull = convex_hull({{0, 0}, {1, 1}, {2, 2}});
  CHECK(hull.area == 0.0);
  const HullPolygon single = convex_hull({{3, 4}});
  CHECK(single.area == 0.0);
  CHECK(single.vertices.size() == 1);
}

TEST_CASE("convex hull: every input point lies inside or on the hull") {
  Rng rng(907);
  std::vector<Point2> points;
  for (int i = 0; i < 1000; ++i)
    points.push_back({rng.uniform(-3.0, 3.0), rng.normal()});
  const HullPolygon hull = convex_hull(points);
  CHECK(hull.vertices.size() >= 3);
  for (const Point2& p : points) REQUIRE(point_in_hull(hull, p));

  // ccw traversal: all consecutive cross products non-negative
  const auto& v = hull.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double c = (v[(i + 1) % v.size()].x - v[i].x) *
                         (v[(i + 2) % v.size()].y - v[i].y) -
                     (v[(i + 1) % v.size()].y - v[i].y) *
                         (v[(i + 2) % v.size()].x - v[i].x);
    REQUIRE(c >= 0.0);
  }
}

TEST_CASE("hull iou: hand-computed exact cases") {
  const HullPolygon tri_a = convex_hull({{0, 0}, {2, 0}, {0, 2}});
  const HullPolygon tri_b = convex_hull({{0, 0}, {2, 0}, {0, 2}});
  CHECK(hull_iou(tri_a, tri_b) == doctest::Approx(1.0).epsilon(1e-9));

  CHECK(hull_iou(square(0, 0, 1), square(5, 5, 1)) == doctest::Approx(0.0));

  // half-overlapping unit squares: intersection 0.5, union 1.5
  CHECK(hull_iou(square(0, 0, 1), square(0.5, 0, 1)) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-9));

  // degenerate conventions
  const HullPolygon seg_a = convex_hull({{0, 0}, {1, 1}});
  const HullPolygon seg_b = convex_hull({{1, 1}, {0, 0}});
  const HullPolygon seg_c = convex_hull({{0, 0}, {2, 2}});
  CHECK(hull_iou(seg_a, seg_b) == 1.0);
  CHECK(hull_iou(seg_a, seg_c) == 0.0);
  CHECK(hull_iou(seg_a, square(0, 0, 1)) == 0.0);
}

TEST_CASE("hull iou: bounds and self-identity on random hulls") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Point2> pa, pb;
    for (int i = 0; i < 12; ++i) {
      pa.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
      pb.push_back({rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 1.5)});
    }
    const HullPolygon a = convex_hull(pa);
    const HullPolygon b = convex_hull(pb);
    const double iou = hull_iou(a, b);
    REQUIRE(iou >= 0.0);
    REQUIRE(iou <= 1.0);
    REQUIRE(hull_iou(a, a) == doctest::Approx(1.0).epsilon(1e-9));
    REQUIRE(std::abs(hull_iou(a, b) - hull_iou(b, a)) <= 1e-9);
  }
}

TEST_CASE("clipping agrees with a monte-carlo area estimate") {
  Rng rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Point2> pa, pb;
    for (int i = 0; i < 10; ++i) {
      pa.push_back({rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)});
      pb.push_back({rng.uniform(0.8, 2.8), rng.uniform(0.8, 2.8)});
    }
    const HullPolygon a = convex_hull(pa);
    const HullPolygon b = convex_hull(pb);
    const double clipped = hull_intersection_area(a, b);

    const double box_x0 = 0.0, box_y0 = 0.0, box_x1 = 2.8, box_y1 = 2.8;
    const double box_area = (box_x1 - box_x0) * (box_y1 - box_y0);
    const int samples = 20000;
    int inside = 0;
    for (int s = 0; s < samples; ++s) {
      const Point2 p{rng.uniform(box_x0, box_x1), rng.uniform(box_y0, box_y1)};
      inside += point_in_hull(a, p) && point_in_hull(b, p);
    }
    const double estimate = box_area * inside / samples;
    const double p_hat = static_cast<double>(inside) / samples;
    const double sigma = box_area * std::sqrt(std::max(p_hat * (1.0 - p_hat), 1e-9) / samples);
    REQUIRE(std::abs(clipped - estimate) <= 3.0 * sigma + 1e-6);
  }
}

TEST_CASE("overlap report: reconstructions equal to privates give IoU 1") {
  const auto model = build_model<float>(arch::classifier_small(1, 16, 16, 3), 5);
  ImageBatch privates(12, 1, 16, 16);
  Rng rng(71);
  for (auto& v : privates.data) v = static_cast<float>(rng.uniform());
  for (int i = 0; i < 12; ++i) privates.labels[i] = static_cast<std::uint32_t>(i / 4);

  ErasePolicy policy = ErasePolicy::random_erase(0.1, 0.4, FillStrategy::constant(0.5f));
  const OverlapReport report =
      overlap_report(model, privates, policy, privates, {0, 1, 2}, 99);
  CHECK(report.pooled.recon_priv == doctest::Approx(1.0).epsilon(1e-9));
  for (const auto& [identity, triple] : report.per_identity)
    CHECK(triple.recon_priv == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(report.per_identity.size() == 3);

  // identity with no reconstructions
  ImageBatch only_zero(4, 1, 16, 16);
  std::copy_n(privates.data.begin(), only_zero.data.size(), only_zero.data.begin());
  for (auto& label : only_zero.labels) label = 0;
  CHECK_THROWS_AS(overlap_report(model, privates, policy, only_zero, {0, 1}, 99),
                  MissingIdentityError);
}

TEST_CASE("projection csv has the documented header and row count") {
  const FeatureSet set = make_features(
      {{0.0, 1.0}, {1.0, 0.5}, {2.0, 0.25}, {1.5, 2.0}}, {0, 1, 0, 1});
  const Projection2D p = pca_project({{FeatureGroup::kRecon, &set}});
  const std::string csv = projection_csv(p);
  CHECK(csv.rfind("x,y,group,identity\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.find("recon") != std::string::npos);
}

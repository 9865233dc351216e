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

#ifndef MILAB_FEATSPACE_HPP_
#define MILAB_FEATSPACE_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "milab/erase.hpp"
#include "milab/error.hpp"
#include "milab/image.hpp"
#include "milab/nn/train.hpp"

namespace milab {

// Feature-space geometry: a shared 2-D PCA projection of private, masked-
// private and reconstructed features, their convex hulls, and hull overlap
// (intersection over union) as the scalar form of "how much the groups
// coincide".

enum class FeatureGroup { kPrivate, kRePrivate, kRecon };

inline std::string to_string(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::kPrivate: return "priv";
    case FeatureGroup::kRePrivate: return "re_priv";
    case FeatureGroup::kRecon: return "recon";
  }
  return "priv";
}

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

struct Projection2D {
  std::vector<Point2> points;
  std::vector<FeatureGroup> groups;      // one per point
  std::vector<std::uint32_t> identities; // one per point
  std::vector<double> basis;             // [feature_dim, 2] orthonormal columns
  std::array<double, 2> explained{};     // variance fractions, non-increasing
  int feature_dim = 0;
};

/// Fits PCA on the union of the tagged sets (mean-centered) and projects all
/// of them with the same basis. The per-component sign is fixed by making the
/// largest-magnitude loading positive, so the projection is deterministic.
inline Projection2D pca_project(
    const std::vector<std::pair<FeatureGroup, const FeatureSet*>>& tagged) {
  int total = 0;
  int dim = -1;
  for (const auto& [group, set] : tagged) {
    (void)group;
    if (set == nullptr || set->n == 0) continue;
    if (dim < 0) dim = set->feature_dim;
    if (set->feature_dim != dim) throw ShapeError("feature dimensions differ");
    total += set->n;
  }
  if (total < 3) throw DegenerateError("need at least 3 points for projection");
  for (const auto& [group, set] : tagged) {
    (void)group;
    if (set == nullptr) continue;
    for (double v : set->features)
      if (!std::isfinite(v)) throw InvariantError("non-finite feature value");
  }

  Eigen::MatrixXd rows(dim, total);
  int col = 0;
  for (const auto& [group, set] : tagged) {
    (void)group;
    if (set == nullptr) continue;
    for (int i = 0; i < set->n; ++i, ++col)
      for (int d = 0; d < dim; ++d) rows(d, col) = set->feature_row(i)[d];
  }
  const Eigen::VectorXd mean = rows.rowwise().mean();
  Eigen::MatrixXd centered = rows.colwise() - mean;
  Eigen::MatrixXd cov =
      (centered * centered.transpose()) / static_cast<double>(total);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const double total_var = es.eigenvalues().cwiseMax(0.0).sum();
  if (total_var <= 0.0)
    throw DegenerateError("all points identical, projection undefined");

  Projection2D projection;
  projection.feature_dim = dim;
  projection.basis.assign(static_cast<std::size_t>(dim) * 2, 0.0);
  for (int comp = 0; comp < 2; ++comp) {
    Eigen::VectorXd axis = es.eigenvectors().col(dim - 1 - comp);  // descending
    int largest = 0;
    for (int d = 1; d < dim; ++d)
      if (std::abs(axis[d]) > std::abs(axis[largest])) largest = d;
    if (axis[largest] < 0.0) axis = -axis;
    for (int d = 0; d < dim; ++d)
      projection.basis[static_cast<std::size_t>(d) * 2 + comp] = axis[d];
    projection.explained[comp] =
        std::max(0.0, es.eigenvalues()[dim - 1 - comp]) / total_var;
  }

  projection.points.reserve(total);
  for (const auto& [group, set] : tagged) {
    if (set == nullptr) continue;
    for (int i = 0; i < set->n; ++i) {
      Point2 p;
      for (int d = 0; d < dim; ++d) {
        const double centered_v = set->feature_row(i)[d] - mean[d];
        p.x += centered_v * projection.basis[static_cast<std::size_t>(d) * 2];
        p.y += centered_v * projection.basis[static_cast<std::size_t>(d) * 2 + 1];
      }
      projection.points.push_back(p);
      projection.groups.push_back(group);
      projection.identities.push_back(set->labels.empty() ? 0 : set->labels[i]);
    }
  }
  return projection;
}

struct HullPolygon {
  std::vector<Point2> vertices;  // counter-clockwise
  double area = 0.0;
};

namespace detail {

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline double shoelace(const std::vector<Point2>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = poly[i];
    const Point2& b = poly[(i + 1) % n];
    twice += a.x * b.y - a.y * b.x;
  }
  return 0.5 * twice;
}

}  // namespace detail

/// Monotone-chain hull; collinear interior points are dropped. Degenerate
/// inputs (a point, a segment, all-collinear) come back with zero area.
inline HullPolygon convex_hull(std::vector<Point2> points) {
  if (points.empty()) throw ConfigError("convex_hull: no points");
  std::sort(points.begin(), points.end(), [](const Point2& a, const Point2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());

  HullPolygon hull;
  const std::size_t n = points.size();
  if (n <= 2) {
    hull.vertices = points;
    hull.area = 0.0;
    return hull;
  }
  std::vector<Point2> chain(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {  // lower
    while (k >= 2 && detail::cross(chain[k - 2], chain[k - 1], points[i]) <= 0.0)
      --k;
    chain[k++] = points[i];
  }
  for (std::size_t i = n - 1, lower = k + 1; i-- > 0;) {  // upper
    while (k >= lower && detail::cross(chain[k - 2], chain[k - 1], points[i]) <= 0.0)
      --k;
    chain[k++] = points[i];
  }
  chain.resize(k - 1);
  hull.vertices = std::move(chain);
  hull.area = detail::shoelace(hull.vertices);
  if (hull.area < 0.0) {  // cannot happen for CCW monotone chain, but guard
    std::reverse(hull.vertices.begin(), hull.vertices.end());
    hull.area = -hull.area;
  }
  return hull;
}

/// True when `p` is inside or on the convex polygon (CCW vertices).
inline bool point_in_hull(const HullPolygon& hull, const Point2& p,
                          double eps = 1e-9) {
  const auto& v = hull.vertices;
  if (v.empty()) return false;
  if (v.size() == 1) return std::abs(p.x - v[0].x) <= eps && std::abs(p.y - v[0].y) <= eps;
  if (v.size() == 2) {
    const double c = detail::cross(v[0], v[1], p);
    if (std::abs(c) > eps) return false;
    const double t = (p.x - v[0].x) * (v[1].x - v[0].x) +
                     (p.y - v[0].y) * (v[1].y - v[0].y);
    const double len2 = (v[1].x - v[0].x) * (v[1].x - v[0].x) +
                        (v[1].y - v[0].y) * (v[1].y - v[0].y);
    return t >= -eps && t <= len2 + eps;
  }
  for (std::size_t i = 0; i < v.size(); ++i)
    if (detail::cross(v[i], v[(i + 1) % v.size()], p) < -eps) return false;
  return true;
}

namespace detail {

// Sutherland-Hodgman clip of a convex subject polygon by a convex CCW clipper.
inline std::vector<Point2> clip_convex(const std::vector<Point2>& subject,
                                       const std::vector<Point2>& clipper) {
  std::vector<Point2> output = subject;
  const std::size_t m = clipper.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const Point2& a = clipper[e];
    const Point2& b = clipper[(e + 1) % m];
    std::vector<Point2> input;
    input.swap(output);
    const auto inside = [&](const Point2& p) { return cross(a, b, p) >= 0.0; };
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Point2& cur = input[i];
      const Point2& prev = input[(i + input.size() - 1) % input.size()];
      const bool cur_in = inside(cur);
      const bool prev_in = inside(prev);
      if (cur_in != prev_in) {
        const double denom = (b.x - a.x) * (prev.y - cur.y) - (b.y - a.y) * (prev.x - cur.x);
        if (denom != 0.0) {
          const double t = ((b.x - a.x) * (prev.y - a.y) - (b.y - a.y) * (prev.x - a.x)) / denom;
          output.push_back(Point2{prev.x + t * (cur.x - prev.x),
                                  prev.y + t * (cur.y - prev.y)});
        }
      }
      if (cur_in) output.push_back(cur);
    }
  }
  return output;
}

}  // namespace detail

/// Area of the intersection of two convex hulls.
inline double hull_intersection_area(const HullPolygon& a, const HullPolygon& b) {
  if (a.vertices.size() < 3 || b.vertices.size() < 3) return 0.0;
  const auto clipped = detail::clip_convex(a.vertices, b.vertices);
  if (clipped.size() < 3) return 0.0;
  return std::abs(detail::shoelace(clipped));
}

/// Intersection-over-union of hull areas. Two degenerate (zero-area) hulls
/// count as identical only when their vertex sets coincide.
inline double hull_iou(const HullPolygon& a, const HullPolygon& b) {
  if (a.area <= 0.0 && b.area <= 0.0) {
    auto va = a.vertices;
    auto vb = b.vertices;
    const auto lt = [](const Point2& p, const Point2& q) {
      return p.x < q.x || (p.x == q.x && p.y < q.y);
    };
    std::sort(va.begin(), va.end(), lt);
    std::sort(vb.begin(), vb.end(), lt);
    return va == vb ? 1.0 : 0.0;
  }
  const double inter = hull_intersection_area(a, b);
  const double uni = a.area + b.area - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

struct IouTriple {
  double recon_priv = 0.0;
  double recon_re = 0.0;
  double re_priv = 0.0;
};

struct OverlapReport {
  IouTriple pooled;
  std::map<std::uint32_t, IouTriple> per_identity;
  std::array<double, 2> explained{};
  Projection2D projection;  // shared basis used for all hulls
};

/// Runs the full protocol: extract features of private images, masked private
/// images, and reconstructions through the SAME target model, project them
/// jointly, and measure hull overlap per identity and pooled.
template <typename S>
OverlapReport overlap_report(const Model<S>& target, const ImageBatch& private_split,
                             const ErasePolicy& policy,
                             const ImageBatch& reconstructions,
                             const std::vector<std::uint32_t>& identities,
                             std::uint64_t mask_seed) {
  const ImageBatch masked = augment_batch(private_split, policy, 0, mask_seed);
  const FeatureSet f_priv = extract_features(target, private_split);
  const FeatureSet f_re = extract_features(target, masked);
  const FeatureSet f_recon = extract_features(target, reconstructions);

  const Projection2D projection = pca_project({
      {FeatureGroup::kPrivate, &f_priv},
      {FeatureGroup::kRePrivate, &f_re},
      {FeatureGroup::kRecon, &f_recon},
  });

  auto collect = [&](FeatureGroup group, std::optional<std::uint32_t> identity) {
    std::vector<Point2> points;
    for (std::size_t i = 0; i < projection.points.size(); ++i)
      if (projection.groups[i] == group &&
          (!identity || projection.identities[i] == *identity))
        points.push_back(projection.points[i]);
    return points;
  };
  auto triple_of = [&](std::optional<std::uint32_t> identity) {
    const auto priv = collect(FeatureGroup::kPrivate, identity);
    const auto re = collect(FeatureGroup::kRePrivate, identity);
    const auto recon = collect(FeatureGroup::kRecon, identity);
    if (recon.empty())
      throw MissingIdentityError(
          "no reconstructions for identity " +
          (identity ? std::to_string(*identity) : std::string("pooled")));
    const HullPolygon hull_priv = convex_hull(priv);
    const HullPolygon hull_re = convex_hull(re);
    const HullPolygon hull_recon = convex_hull(recon);
    IouTriple triple;
    triple.recon_priv = hull_iou(hull_recon, hull_priv);
    triple.recon_re = hull_iou(hull_recon, hull_re);
    triple.re_priv = hull_iou(hull_re, hull_priv);
    return triple;
  };

  OverlapReport report;
  report.explained = projection.explained;
  report.pooled = triple_of(std::nullopt);
  for (std::uint32_t identity : identities)
    report.per_identity[identity] = triple_of(identity);
  report.projection = projection;
  return report;
}

inline nlohmann::json overlap_to_json(const OverlapReport& report) {
  nlohmann::json j;
  j["pooled"] = {{"recon_priv", report.pooled.recon_priv},
                 {"recon_re", report.pooled.recon_re},
                 {"re_priv", report.pooled.re_priv}};
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [identity, triple] : report.per_identity)
    per[std::to_string(identity)] = {{"recon_priv", triple.recon_priv},
                                     {"recon_re", triple.recon_re},
                                     {"re_priv", triple.re_priv}};
  j["per_identity"] = per;
  j["explained_variance"] = {report.explained[0], report.explained[1]};
  return j;
}

/// Plot-ready dump: x, y, group, identity.
inline std::string projection_csv(const Projection2D& projection) {
  std::string csv = "x,y,group,identity\n";
  char line[128];
  for (std::size_t i = 0; i < projection.points.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.9g,%.9g,%s,%u\n",
                  projection.points[i].x, projection.points[i].y,
                  to_string(projection.groups[i]).c_str(),
                  projection.identities[i]);
    csv += line;
  }
  return csv;
}

}  // namespace milab

#endif  // MILAB_FEATSPACE_HPP_

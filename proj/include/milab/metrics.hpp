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

#ifndef MILAB_METRICS_HPP_
#define MILAB_METRICS_HPP_

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "milab/error.hpp"
#include "milab/image.hpp"
#include "milab/nn/train.hpp"

namespace milab {

// Evaluation quantities: natural accuracy, attack accuracy under the judge
// model, nearest-neighbor feature distance, the privacy-utility trade-off
// ratio, and a Frechet distance between feature distributions.

struct AttackAccuracy {
  double value = 0.0;          // fraction in [0,1]
  double ci_half_width = 0.0;  // 95% normal-approximation half width
};

/// Fraction of reconstructions the evaluation model assigns to their target
/// label (top-1), with a binomial confidence interval.
template <typename S>
AttackAccuracy attack_accuracy(const Model<S>& eval_model,
                               const ImageBatch& reconstructions) {
  const auto predictions = classify(eval_model, reconstructions);
  int correct = 0;
  for (int i = 0; i < reconstructions.n; ++i)
    correct += predictions[i] == reconstructions.labels[i];
  AttackAccuracy out;
  out.value = static_cast<double>(correct) / reconstructions.n;
  out.ci_half_width =
      1.96 * std::sqrt(out.value * (1.0 - out.value) / reconstructions.n);
  return out;
}

/// Mean over reconstructions of the L2 distance to the nearest same-identity
/// private image, measured in the evaluation model's penultimate features.
/// Higher means the attack landed further from the private data.
template <typename S>
double knn_distance(const Model<S>& eval_model, const ImageBatch& reconstructions,
                    const ImageBatch& private_split) {
  const FeatureSet recon_features = extract_features(eval_model, reconstructions);
  const FeatureSet private_features = extract_features(eval_model, private_split);
  const int dim = recon_features.feature_dim;

  double total = 0.0;
  for (int i = 0; i < reconstructions.n; ++i) {
    const std::uint32_t identity = reconstructions.labels[i];
    double best = -1.0;
    for (int p = 0; p < private_split.n; ++p) {
      if (private_split.labels[p] != identity) continue;
      double d2 = 0.0;
      const double* a = recon_features.feature_row(i);
      const double* b = private_features.feature_row(p);
      for (int d = 0; d < dim; ++d) {
        const double diff = a[d] - b[d];
        d2 += diff * diff;
      }
      if (best < 0.0 || d2 < best) best = d2;
    }
    if (best < 0.0)
      throw MissingIdentityError("identity " + std::to_string(identity) +
                                 " has no private samples");
    total += std::sqrt(best);
  }
  return total / reconstructions.n;
}

/// Trade-off ratio between attack-accuracy drop and natural-accuracy drop,
/// inputs in percent. Null value means the table renders "OP": the defended
/// model's accuracy is not below the baseline's, so the ratio is undefined.
struct DeltaResult {
  std::optional<double> value;
  bool outperforms = false;  // acc_def >= acc_nodef
  bool degenerate = false;   // equal accuracies with differing attack accuracy
};

inline DeltaResult tradeoff_delta(double acc_nodef, double attacc_nodef,
                                  double acc_def, double attacc_def) {
  for (double v : {acc_nodef, attacc_nodef, acc_def, attacc_def})
    if (!(v >= 0.0 && v <= 100.0))
      throw ConfigError("tradeoff_delta expects percentages in [0,100]");
  DeltaResult result;
  if (acc_def >= acc_nodef) {
    result.outperforms = true;
    result.degenerate = acc_def == acc_nodef && attacc_def != attacc_nodef;
    return result;
  }
  result.value = (attacc_nodef - attacc_def) / (acc_nodef - acc_def);
  return result;
}

/// Frechet distance between Gaussian fits of two feature sets:
/// ||mu_A - mu_B||^2 + Tr(S_A + S_B - 2 (S_A S_B)^{1/2}), with maximum-
/// likelihood covariances and a small ridge (1e-6 * trace/dim) when
/// `shrinkage` is on. Without shrinkage, rank-deficient covariances raise
/// DegenerateError.
inline double frechet_feature_distance(const FeatureSet& a, const FeatureSet& b,
                                       bool shrinkage = true) {
  if (a.feature_dim != b.feature_dim)
    throw ShapeError("feature dimensions differ");
  const int dim = a.feature_dim;
  if (a.n < 2 || b.n < 2)
    throw DegenerateError("need at least two rows per feature set");

  using Mat = Eigen::MatrixXd;
  using Vec = Eigen::VectorXd;
  auto moments = [&](const FeatureSet& set, Vec& mu, Mat& sigma) {
    Mat rows(dim, set.n);  // one column per sample
    for (int i = 0; i < set.n; ++i)
      for (int d = 0; d < dim; ++d) rows(d, i) = set.feature_row(i)[d];
    mu = rows.rowwise().mean();
    Mat centered = rows.colwise() - mu;
    sigma = (centered * centered.transpose()) / static_cast<double>(set.n);
  };
  Vec mu_a, mu_b;
  Mat sig_a, sig_b;
  moments(a, mu_a, sig_a);
  moments(b, mu_b, sig_b);

  if (shrinkage) {
    const double eps_a = 1e-6 * sig_a.trace() / dim;
    const double eps_b = 1e-6 * sig_b.trace() / dim;
    sig_a += Mat::Identity(dim, dim) * eps_a;
    sig_b += Mat::Identity(dim, dim) * eps_b;
  } else {
    Eigen::SelfAdjointEigenSolver<Mat> check_a(sig_a), check_b(sig_b);
    const double tol_a = 1e-12 * std::max(1.0, sig_a.trace());
    const double tol_b = 1e-12 * std::max(1.0, sig_b.trace());
    if (check_a.eigenvalues().minCoeff() <= tol_a ||
        check_b.eigenvalues().minCoeff() <= tol_b)
      throw DegenerateError("rank-deficient covariance without shrinkage");
  }

  // Tr((S_A S_B)^{1/2}) = Tr((S_A^{1/2} S_B S_A^{1/2})^{1/2})
  Eigen::SelfAdjointEigenSolver<Mat> es_a(sig_a);
  Vec root_vals = es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Mat sqrt_a = es_a.eigenvectors() * root_vals.asDiagonal() *
               es_a.eigenvectors().transpose();
  Mat inner = sqrt_a * sig_b * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es_inner(inner);
  const double trace_sqrt =
      es_inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double mean_term = (mu_a - mu_b).squaredNorm();
  const double ffd = mean_term + sig_a.trace() + sig_b.trace() - 2.0 * trace_sqrt;
  return std::max(ffd, 0.0);  // guard the tiny negatives of exact-match inputs
}

/// One experiment's evaluation summary; the metrics.json schema.
struct MetricsReport {
  double acc = 0.0;
  double att_acc = 0.0;
  double att_acc_ci = 0.0;
  double knn_dist = 0.0;
  DeltaResult delta;
  double ffd = 0.0;
  double hull_iou_recon_priv = 0.0;
  double hull_iou_recon_re = 0.0;
  double hull_iou_re_priv = 0.0;
  nlohmann::json provenance;
};

inline nlohmann::json metrics_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["acc"] = report.acc;
  j["att_acc"] = report.att_acc;
  j["att_acc_ci"] = report.att_acc_ci;
  j["knn_dist"] = report.knn_dist;
  if (report.delta.value)
    j["delta"] = *report.delta.value;
  else
    j["delta"] = nullptr;
  j["ffd"] = report.ffd;
  j["hull_iou_recon_priv"] = report.hull_iou_recon_priv;
  j["hull_iou_recon_re"] = report.hull_iou_recon_re;
  j["hull_iou_re_priv"] = report.hull_iou_re_priv;
  j["provenance"] = report.provenance;
  return j;
}

/// Two-decimal rendering. "OP" marks a defended model whose accuracy is not
/// below the baseline's; "-" marks a ratio with no baseline to compare against.
inline std::string render_delta(const DeltaResult& delta) {
  if (delta.value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *delta.value);
    return buf;
  }
  return delta.outperforms ? "OP" : "-";
}

}  // namespace milab

#endif  // MILAB_METRICS_HPP_

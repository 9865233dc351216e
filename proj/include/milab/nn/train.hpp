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

#ifndef MILAB_NN_TRAIN_HPP_
#define MILAB_NN_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "milab/erase.hpp"
#include "milab/error.hpp"
#include "milab/image.hpp"
#include "milab/nn/net.hpp"
#include "milab/rng.hpp"

namespace milab {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double epoch_budget_fraction = 1.0;
  double latent_reg = 0.1;  // decoder training: latent moment-matching weight
  /// Called once per epoch with the (already masked) images entering the
  /// loss, before any gradient step of that epoch.
  std::function<void(int, const ImageBatch&)> epoch_hook;
};

/// Penultimate activations plus logits for a batch.
struct FeatureSet {
  int n = 0;
  int feature_dim = 0;
  int num_classes = 0;
  std::vector<double> features;  // [N, feature_dim]
  std::vector<double> logits;    // [N, num_classes]
  std::vector<std::uint32_t> labels;

  const double* feature_row(int i) const { return features.data() + static_cast<std::size_t>(i) * feature_dim; }
  const double* logit_row(int i) const { return logits.data() + static_cast<std::size_t>(i) * num_classes; }
};

namespace detail {

inline constexpr std::uint64_t kTagAugment = 0xB1;
inline constexpr std::uint64_t kTagShuffle = 0xB2;
inline constexpr std::uint64_t kTagLatent = 0xB3;

template <typename S>
std::vector<S> gather_input(const ImageBatch& batch, const std::vector<int>& rows) {
  const std::size_t dim = batch.pixels_per_image();
  std::vector<S> input(rows.size() * dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const float* src = batch.image(rows[r]);
    S* dst = input.data() + r * dim;
    for (std::size_t i = 0; i < dim; ++i) dst[i] = static_cast<S>(src[i]);
  }
  return input;
}

template <typename S>
void check_classifier_input(const Model<S>& model, const ImageBatch& batch) {
  if (!model.arch.is_classifier())
    throw ConfigError("operation requires a classifier model");
  if (model.arch.input.c != batch.c || model.arch.input.h != batch.h ||
      model.arch.input.w != batch.w)
    throw ShapeError("batch geometry does not match model input");
}

}  // namespace detail

/// Deterministic forward pass over a batch; features are the activation
/// immediately before the final linear map.
template <typename S>
FeatureSet extract_features(const Model<S>& model, const ImageBatch& batch) {
  detail::check_classifier_input(model, batch);
  FeatureSet set;
  set.n = batch.n;
  set.feature_dim = model.arch.feature_dim;
  set.num_classes = model.arch.num_classes;
  set.features.resize(static_cast<std::size_t>(batch.n) * set.feature_dim);
  set.logits.resize(static_cast<std::size_t>(batch.n) * set.num_classes);
  set.labels = batch.labels;

  Workspace<S> ws;
  const int chunk = 128;
  for (int start = 0; start < batch.n; start += chunk) {
    const int count = std::min(chunk, batch.n - start);
    std::vector<int> rows(count);
    for (int i = 0; i < count; ++i) rows[i] = start + i;
    const auto input = detail::gather_input<S>(batch, rows);
    forward(model, input.data(), count, ws);
    const auto& feats = ws.act[model.arch.feature_layer];
    const auto& logits = ws.act.back();
    for (int i = 0; i < count; ++i) {
      for (int d = 0; d < set.feature_dim; ++d)
        set.features[(static_cast<std::size_t>(start) + i) * set.feature_dim + d] =
            static_cast<double>(feats[static_cast<std::size_t>(i) * set.feature_dim + d]);
      for (int d = 0; d < set.num_classes; ++d)
        set.logits[(static_cast<std::size_t>(start) + i) * set.num_classes + d] =
            static_cast<double>(logits[static_cast<std::size_t>(i) * set.num_classes + d]);
    }
  }
  return set;
}

template <typename S>
std::vector<std::uint32_t> classify(const Model<S>& model, const ImageBatch& batch) {
  const FeatureSet set = extract_features(model, batch);
  std::vector<std::uint32_t> predictions(batch.n);
  for (int i = 0; i < batch.n; ++i) {
    const double* row = set.logit_row(i);
    int best = 0;
    for (int c = 1; c < set.num_classes; ++c)
      if (row[c] > row[best]) best = c;
    predictions[i] = static_cast<std::uint32_t>(best);
  }
  return predictions;
}

template <typename S>
double accuracy(const Model<S>& model, const ImageBatch& batch) {
  const auto predictions = classify(model, batch);
  int correct = 0;
  for (int i = 0; i < batch.n; ++i) correct += predictions[i] == batch.labels[i];
  return static_cast<double>(correct) / batch.n;
}

/// Trains a classifier, masking every minibatch with `policy` before the
/// gradient step. Test accuracy is always measured on unmasked images.
/// epoch_budget_fraction < 1 truncates the epoch count; 0 returns the input
/// model untouched.
template <typename S>
Model<S> train_classifier(Model<S> model, const ImageBatch& train_split,
                          const ImageBatch& test_split, const ErasePolicy& policy,
                          const TrainConfig& config, std::uint64_t seed) {
  detail::check_classifier_input(model, train_split);
  detail::check_classifier_input(model, test_split);
  policy.validate();
  const int classes = model.arch.num_classes;
  std::vector<int> class_seen(classes, 0);
  for (auto label : train_split.labels)
    if (label < static_cast<std::uint32_t>(classes)) ++class_seen[label];
  for (int c = 0; c < classes; ++c)
    if (class_seen[c] == 0)
      throw ConfigError("training labels do not cover class " + std::to_string(c));

  const double budget = std::clamp(config.epoch_budget_fraction, 0.0, 1.0);
  const int epochs_to_run = static_cast<int>(std::lround(config.epochs * budget));

  model.train_info = TrainInfo{config.epochs, config.batch_size,
                               config.learning_rate, "const", "adam",
                               seed, config.epoch_budget_fraction, policy};
  if (epochs_to_run == 0) {
    model.train_info = TrainInfo{};  // untouched contract: nothing ran
    return model;
  }

  Adam<S> optimizer(model.params.size(), config.learning_rate);
  std::vector<S> grads(model.params.size(), S(0));
  Workspace<S> ws;
  std::vector<S> dlogits;
  std::vector<int> order(train_split.n);

  for (int epoch = 0; epoch < epochs_to_run; ++epoch) {
    const ImageBatch augmented = augment_batch(
        train_split, policy, epoch, derive_seed(seed, detail::kTagAugment));
    if (config.epoch_hook) config.epoch_hook(epoch, augmented);

    for (int i = 0; i < train_split.n; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(seed, detail::kTagShuffle,
                                static_cast<std::uint64_t>(epoch)));
    for (int i = train_split.n - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);

    double loss_sum = 0.0;
    int correct = 0;
    for (int start = 0; start < train_split.n; start += config.batch_size) {
      const int count = std::min(config.batch_size, train_split.n - start);
      std::vector<int> rows(order.begin() + start, order.begin() + start + count);
      const auto input = detail::gather_input<S>(augmented, rows);
      std::vector<std::uint32_t> labels(count);
      for (int i = 0; i < count; ++i) labels[i] = augmented.labels[rows[i]];

      forward(model, input.data(), count, ws);
      const double loss = softmax_cross_entropy(ws.act.back(), count, classes,
                                                labels.data(), &dlogits);
      if (!std::isfinite(loss))
        throw DivergenceError("training loss became non-finite at epoch " +
                              std::to_string(epoch));
      loss_sum += loss * count;
      for (int i = 0; i < count; ++i) {
        const S* row = ws.act.back().data() + static_cast<std::size_t>(i) * classes;
        int best = 0;
        for (int c = 1; c < classes; ++c)
          if (row[c] > row[best]) best = c;
        correct += best == static_cast<int>(labels[i]);
      }

      std::fill(grads.begin(), grads.end(), S(0));
      backward(model, ws, dlogits, &grads, nullptr);
      optimizer.step(model.params, grads);
    }

    EpochStats stats;
    stats.train_loss = loss_sum / train_split.n;
    stats.train_acc = static_cast<double>(correct) / train_split.n;
    stats.test_acc = accuracy(model, test_split);
    model.history.push_back(stats);
  }
  return model;
}

namespace detail {

// Encoder used only while fitting the decoder; mirrors the small classifier
// trunk but ends in a linear latent projection.
inline ArchSpec encoder_arch(int c, int h, int w, int latent_dim) {
  ArchSpec a;
  a.kind = ModelKind::kClassifierSmall;
  a.input = TensorShape{c, h, w};
  a.num_classes = latent_dim;
  int ch = c, hh = h, ww = w;
  for (int out : {16, 32, 64}) {
    a.layers.push_back(LayerDesc::conv(ch, out, 3, 2, 1));
    a.layers.push_back(LayerDesc::activation(LayerOp::kRelu));
    ch = out;
    hh = (hh + 1) / 2;
    ww = (ww + 1) / 2;
  }
  a.layers.push_back(LayerDesc::flatten());
  a.feature_dim = ch * hh * ww;
  a.feature_layer = static_cast<int>(a.layers.size());
  a.layers.push_back(LayerDesc::dense(ch * hh * ww, latent_dim));
  a.validate();
  return a;
}

}  // namespace detail

/// Fits the public-data decoder as an autoencoder: a throwaway encoder maps
/// images to latents, the decoder maps them back, and a moment-matching
/// penalty keeps the latent marginals near zero mean / unit variance so that
/// standard-normal draws land on the learned image manifold. Only the decoder
/// is returned.
template <typename S>
Model<S> train_decoder(const ImageBatch& public_split, const ArchSpec& decoder_arch,
                       const TrainConfig& config, std::uint64_t seed) {
  if (decoder_arch.kind != ModelKind::kDecoder)
    throw ConfigError("train_decoder requires a decoder arch");
  decoder_arch.validate();
  if (public_split.n <= 0) throw ConfigError("public split is empty");
  const auto out_shape = decoder_arch.shape_chain().back();
  if (out_shape.c != public_split.c || out_shape.h != public_split.h ||
      out_shape.w != public_split.w)
    throw ShapeError("decoder output does not match public image geometry");

  const int latent = decoder_arch.latent_dim;
  Model<S> decoder = build_model<S>(decoder_arch, derive_seed(seed, 0xDEC0DE));
  Model<S> encoder = build_model<S>(
      detail::encoder_arch(public_split.c, public_split.h, public_split.w, latent),
      derive_seed(seed, 0xE2C0DE));

  decoder.train_info = TrainInfo{config.epochs, config.batch_size,
                                 config.learning_rate, "const", "adam",
                                 seed, 1.0, ErasePolicy::no_defense()};

  Adam<S> dec_opt(decoder.params.size(), config.learning_rate);
  Adam<S> enc_opt(encoder.params.size(), config.learning_rate);
  std::vector<S> dec_grads(decoder.params.size(), S(0));
  std::vector<S> enc_grads(encoder.params.size(), S(0));
  Workspace<S> enc_ws, dec_ws;
  std::vector<int> order(public_split.n);
  const std::size_t image_dim = public_split.pixels_per_image();

  // last 10% (at least one image) held out for the reconstruction metric
  const int holdout = std::max(1, public_split.n / 10);
  const int train_n = public_split.n - holdout;
  if (train_n < 1) throw ConfigError("public split too small to hold out");

  auto heldout_mse = [&]() {
    double total = 0.0;
    std::vector<int> rows(holdout);
    for (int i = 0; i < holdout; ++i) rows[i] = train_n + i;
    const auto target = detail::gather_input<S>(public_split, rows);
    forward(encoder, target.data(), holdout, enc_ws);
    forward(decoder, enc_ws.act.back().data(), holdout, dec_ws);
    const auto& recon = dec_ws.act.back();
    for (std::size_t i = 0; i < recon.size(); ++i) {
      const double diff = static_cast<double>(recon[i]) - static_cast<double>(target[i]);
      total += diff * diff;
    }
    return total / static_cast<double>(recon.size());
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int i = 0; i < train_n; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(seed, detail::kTagShuffle,
                                static_cast<std::uint64_t>(epoch)));
    for (int i = train_n - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);

    double loss_sum = 0.0;
    for (int start = 0; start < train_n; start += config.batch_size) {
      const int count = std::min(config.batch_size, train_n - start);
      std::vector<int> rows(order.begin() + start, order.begin() + start + count);
      const auto target = detail::gather_input<S>(public_split, rows);

      forward(encoder, target.data(), count, enc_ws);
      const std::vector<S>& z = enc_ws.act.back();
      forward(decoder, z.data(), count, dec_ws);
      const std::vector<S>& recon = dec_ws.act.back();

      // reconstruction term
      const std::size_t numel = static_cast<std::size_t>(count) * image_dim;
      std::vector<S> drecon(numel);
      double loss = 0.0;
      for (std::size_t i = 0; i < numel; ++i) {
        const double diff = static_cast<double>(recon[i]) - static_cast<double>(target[i]);
        loss += diff * diff;
        drecon[i] = static_cast<S>(2.0 * diff / static_cast<double>(numel));
      }
      loss /= static_cast<double>(numel);

      // latent moment penalty: mean^2 + (var - 1)^2 per dimension
      std::vector<double> mu(latent, 0.0), var(latent, 0.0);
      for (int b = 0; b < count; ++b)
        for (int d = 0; d < latent; ++d)
          mu[d] += static_cast<double>(z[static_cast<std::size_t>(b) * latent + d]);
      for (auto& m : mu) m /= count;
      for (int b = 0; b < count; ++b)
        for (int d = 0; d < latent; ++d) {
          const double c = static_cast<double>(z[static_cast<std::size_t>(b) * latent + d]) - mu[d];
          var[d] += c * c;
        }
      for (auto& v : var) v /= count;
      double penalty = 0.0;
      for (int d = 0; d < latent; ++d)
        penalty += mu[d] * mu[d] + (var[d] - 1.0) * (var[d] - 1.0);
      penalty /= latent;
      loss += config.latent_reg * penalty;
      if (!std::isfinite(loss))
        throw DivergenceError("decoder loss became non-finite at epoch " +
                              std::to_string(epoch));
      loss_sum += loss * count;

      std::fill(dec_grads.begin(), dec_grads.end(), S(0));
      std::vector<S> dz;
      backward(decoder, dec_ws, drecon, &dec_grads, &dz);
      const double reg_scale = config.latent_reg / latent;
      for (int b = 0; b < count; ++b)
        for (int d = 0; d < latent; ++d) {
          const std::size_t at = static_cast<std::size_t>(b) * latent + d;
          const double centered = static_cast<double>(z[at]) - mu[d];
          const double dpen = 2.0 * mu[d] / count +
                              2.0 * (var[d] - 1.0) * 2.0 * centered / count;
          dz[at] += static_cast<S>(reg_scale * dpen);
        }
      std::fill(enc_grads.begin(), enc_grads.end(), S(0));
      backward(encoder, enc_ws, dz, &enc_grads, nullptr);

      dec_opt.step(decoder.params, dec_grads);
      enc_opt.step(encoder.params, enc_grads);
    }

    EpochStats stats;
    stats.train_loss = loss_sum / train_n;
    stats.train_acc = 0.0;
    stats.test_acc = heldout_mse();  // reconstruction error, lower is better
    decoder.history.push_back(stats);
  }
  return decoder;
}

/// Decodes a batch of latent vectors to images (rows of `latents`).
template <typename S>
std::vector<S> decode(const Model<S>& decoder, const std::vector<S>& latents,
                      int batch) {
  if (decoder.arch.kind != ModelKind::kDecoder)
    throw ConfigError("decode requires a decoder model");
  Workspace<S> ws;
  forward(decoder, latents.data(), batch, ws);
  return ws.act.back();
}

}  // namespace milab

#endif  // MILAB_NN_TRAIN_HPP_

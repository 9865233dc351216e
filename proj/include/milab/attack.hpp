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

#ifndef MILAB_ATTACK_HPP_
#define MILAB_ATTACK_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "milab/erase.hpp"
#include "milab/error.hpp"
#include "milab/hash.hpp"
#include "milab/image.hpp"
#include "milab/nn/train.hpp"
#include "milab/rng.hpp"
#include "milab/threadpool.hpp"

namespace milab {

// Gradient-based model inversion: find an input the target model classifies
// as a chosen identity with maximum confidence, either directly in pixel
// space (with smoothness/magnitude priors) or through the public decoder.
// The adaptive variant re-masks the candidate with the defense's own scheme
// at every step, modeling an attacker who knows the defense parameters.

enum class AttackStrategy { kPixelSpace, kLatentSpace };

struct AttackConfig {
  AttackStrategy strategy = AttackStrategy::kLatentSpace;
  bool adaptive = false;
  ErasePolicy adaptive_policy;  // only read when adaptive
  int restarts = 8;
  int steps = 300;
  double step_size = 0.05;
  double lambda_tv = 1e-3;   // pixel-space smoothness prior
  double lambda_l2 = 1e-4;   // candidate / latent magnitude prior
  std::uint64_t seed = 0;

  void validate() const {
    if (restarts < 1) throw ConfigError("attack restarts must be >= 1");
    if (steps < 1) throw ConfigError("attack steps must be >= 1");
    if (step_size <= 0.0) throw ConfigError("attack step_size must be positive");
    if (lambda_tv < 0.0 || lambda_l2 < 0.0)
      throw ConfigError("prior weights must be >= 0");
    if (adaptive) adaptive_policy.validate();
  }
};

inline nlohmann::json attack_config_to_json(const AttackConfig& c) {
  nlohmann::json j;
  j["strategy"] = c.strategy == AttackStrategy::kPixelSpace ? "pixel" : "latent";
  j["adaptive"] = c.adaptive;
  j["adaptive_policy"] = policy_to_json(c.adaptive_policy);
  j["restarts"] = c.restarts;
  j["steps"] = c.steps;
  j["step_size"] = c.step_size;
  j["lambda_tv"] = c.lambda_tv;
  j["lambda_l2"] = c.lambda_l2;
  j["seed"] = c.seed;
  return j;
}

inline AttackConfig attack_config_from_json(const nlohmann::json& j) {
  AttackConfig c;
  const std::string strategy = j.value("strategy", "latent");
  if (strategy == "pixel") c.strategy = AttackStrategy::kPixelSpace;
  else if (strategy == "latent") c.strategy = AttackStrategy::kLatentSpace;
  else throw ConfigError("unknown attack strategy: " + strategy);
  c.adaptive = j.value("adaptive", false);
  if (j.contains("adaptive_policy"))
    c.adaptive_policy = policy_from_json(j.at("adaptive_policy"));
  c.restarts = j.value("restarts", c.restarts);
  c.steps = j.value("steps", c.steps);
  c.step_size = j.value("step_size", c.step_size);
  c.lambda_tv = j.value("lambda_tv", c.lambda_tv);
  c.lambda_l2 = j.value("lambda_l2", c.lambda_l2);
  c.seed = j.value("seed", c.seed);
  return c;
}

inline std::string attack_config_hash(const AttackConfig& c) {
  return hex64(fnv1a64(attack_config_to_json(c).dump()));
}

/// One identity's inversion outcome.
struct IdentityReconstruction {
  std::uint32_t label = 0;
  int sample_index = 0;                      // k within attack_all
  std::vector<float> image;                  // [C,H,W], clamped to [0,1]
  std::vector<std::vector<double>> traces;   // per-restart objective per step
  std::vector<double> restart_confidences;   // final target softmax per restart
  int selected_restart = -1;
  double confidence = 0.0;                   // target softmax at the label
};

struct AttackResult {
  std::vector<IdentityReconstruction> items;
  std::vector<std::uint32_t> failed_labels;
  std::string config_hash;
  std::string target_id;  // provenance: hash of the target checkpoint params
};

namespace detail {

inline constexpr std::uint64_t kTagAttackInit = 0xC1;
inline constexpr std::uint64_t kTagAdaptMask = 0xC2;
inline constexpr std::uint64_t kTagAdaptFill = 0xC3;

// anisotropic squared total variation and its gradient
template <typename S>
double total_variation(const S* x, int c, int h, int w, S* grad,
                       double weight) {
  double tv = 0.0;
  for (int ch = 0; ch < c; ++ch) {
    const S* plane = x + static_cast<std::size_t>(ch) * h * w;
    S* gplane = grad + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const double v = plane[y * w + xx];
        if (y + 1 < h) {
          const double d = static_cast<double>(plane[(y + 1) * w + xx]) - v;
          tv += d * d;
          gplane[y * w + xx] -= static_cast<S>(2.0 * weight * d);
          gplane[(y + 1) * w + xx] += static_cast<S>(2.0 * weight * d);
        }
        if (xx + 1 < w) {
          const double d = static_cast<double>(plane[y * w + xx + 1]) - v;
          tv += d * d;
          gplane[y * w + xx] -= static_cast<S>(2.0 * weight * d);
          gplane[y * w + xx + 1] += static_cast<S>(2.0 * weight * d);
        }
      }
  }
  return tv;
}

}  // namespace detail

/// Maximizes the target's softmax likelihood of `label` over the candidate
/// space: steps of Adam on CE(T(x), label) plus priors, restarts batched
/// together, the most confident restart kept.
template <typename S>
IdentityReconstruction invert_identity(const Model<S>& target,
                                       std::uint32_t label,
                                       std::type_identity_t<const Model<S>*> decoder,
                                       const AttackConfig& config) {
  config.validate();
  if (!target.arch.is_classifier())
    throw ConfigError("inversion target must be a classifier");
  if (label >= static_cast<std::uint32_t>(target.arch.num_classes))
    throw ConfigError("attack label outside the target's class range");
  const bool latent = config.strategy == AttackStrategy::kLatentSpace;
  if (latent && decoder == nullptr)
    throw ConfigError("latent-space attack requires a decoder");
  if (latent && decoder->arch.kind != ModelKind::kDecoder)
    throw ConfigError("latent-space attack requires a decoder model");

  const int channels = target.arch.input.c;
  const int height = target.arch.input.h;
  const int width = target.arch.input.w;
  const std::size_t image_dim = static_cast<std::size_t>(channels) * height * width;
  if (latent) {
    const auto out = decoder->arch.shape_chain().back();
    if (out.c != channels || out.h != height || out.w != width)
      throw ShapeError("decoder output does not match target input");
  }

  const int restarts = config.restarts;
  const std::size_t cand_dim = latent ? static_cast<std::size_t>(decoder->arch.latent_dim)
                                      : image_dim;
  std::vector<S> candidates(restarts * cand_dim);
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(config.seed, detail::kTagAttackInit,
                        static_cast<std::uint64_t>(r)));
    S* row = candidates.data() + static_cast<std::size_t>(r) * cand_dim;
    for (std::size_t i = 0; i < cand_dim; ++i)
      row[i] = latent ? static_cast<S>(rng.normal()) : static_cast<S>(rng.uniform());
  }

  Adam<S> optimizer(candidates.size(), config.step_size);
  std::vector<S> cand_grads(candidates.size());
  Workspace<S> target_ws, decoder_ws;
  std::vector<S> images;        // current candidate images [R, C, H, W]
  std::vector<S> masked;        // adaptive: masked view entering the target
  std::vector<MaskSpec> step_masks(restarts);
  std::vector<std::vector<double>> traces(restarts);
  const int classes = target.arch.num_classes;

  for (int step = 0; step < config.steps; ++step) {
    // candidate images
    if (latent) {
      forward(*decoder, candidates.data(), restarts, decoder_ws);
      images = decoder_ws.act.back();
    } else {
      images = candidates;
    }

    // adaptive masking: a fresh defense mask per candidate per step
    const S* target_input = images.data();
    if (config.adaptive) {
      masked = images;
      for (int r = 0; r < restarts; ++r) {
        step_masks[r] =
            make_mask(config.adaptive_policy, r, step, width, height,
                      derive_seed(config.seed, detail::kTagAdaptMask));
        Rng fill_rng(derive_seed(config.seed, detail::kTagAdaptFill,
                                 static_cast<std::uint64_t>(r),
                                 static_cast<std::uint64_t>(step)));
        std::vector<float> view(image_dim);
        S* img = masked.data() + static_cast<std::size_t>(r) * image_dim;
        for (std::size_t i = 0; i < image_dim; ++i)
          view[i] = static_cast<float>(img[i]);
        apply_mask(view.data(), channels, height, width, step_masks[r],
                   config.adaptive_policy.fill, fill_rng);
        for (std::size_t i = 0; i < image_dim; ++i)
          img[i] = static_cast<S>(view[i]);
      }
      target_input = masked.data();
    }

    forward(target, target_input, restarts, target_ws);
    const std::vector<S>& logits = target_ws.act.back();

    // per-restart objective and dL/dlogits (restarts are independent, so the
    // per-sample gradient is not averaged)
    std::vector<S> dlogits(logits.size());
    std::vector<double> step_loss(restarts, 0.0);
    for (int r = 0; r < restarts; ++r) {
      const S* row = logits.data() + static_cast<std::size_t>(r) * classes;
      const auto probs = softmax_row(row, classes);
      step_loss[r] = -std::log(std::max(probs[label], 1e-300));
      S* drow = dlogits.data() + static_cast<std::size_t>(r) * classes;
      for (int c = 0; c < classes; ++c)
        drow[c] = static_cast<S>(probs[c] - (static_cast<std::uint32_t>(c) == label ? 1.0 : 0.0));
    }

    std::vector<S> dimages;
    backward(target, target_ws, dlogits, nullptr, &dimages);

    // gradients through the adaptive mask: fill values do not depend on the
    // candidate, so masked pixels contribute nothing
    if (config.adaptive) {
      for (int r = 0; r < restarts; ++r) {
        S* grad_img = dimages.data() + static_cast<std::size_t>(r) * image_dim;
        const MaskSpec& mask = step_masks[r];
        if (mask.kind == MaskSpec::Kind::kWholeImage) {
          std::fill(grad_img, grad_img + image_dim, S(0));
        } else if (mask.kind == MaskSpec::Kind::kRegions) {
          for (const auto& region : mask.regions)
            for (int ch = 0; ch < channels; ++ch)
              for (int y = region.y; y < region.y + region.h; ++y)
                for (int x = region.x; x < region.x + region.w; ++x)
                  grad_img[(static_cast<std::size_t>(ch) * height + y) * width + x] = S(0);
        } else if (mask.kind == MaskSpec::Kind::kPixels) {
          for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
              if (mask.pixel_mask[static_cast<std::size_t>(y) * width + x])
                for (int ch = 0; ch < channels; ++ch)
                  grad_img[(static_cast<std::size_t>(ch) * height + y) * width + x] = S(0);
        }
      }
    }

    // priors
    if (latent) {
      std::fill(cand_grads.begin(), cand_grads.end(), S(0));
      backward(*decoder, decoder_ws, dimages, nullptr, &cand_grads);
      for (int r = 0; r < restarts; ++r) {
        S* z = candidates.data() + static_cast<std::size_t>(r) * cand_dim;
        S* gz = cand_grads.data() + static_cast<std::size_t>(r) * cand_dim;
        double l2 = 0.0;
        for (std::size_t i = 0; i < cand_dim; ++i) {
          l2 += static_cast<double>(z[i]) * z[i];
          gz[i] += static_cast<S>(2.0 * config.lambda_l2 * z[i]);
        }
        step_loss[r] += config.lambda_l2 * l2;
      }
    } else {
      cand_grads = dimages;
      for (int r = 0; r < restarts; ++r) {
        S* x = candidates.data() + static_cast<std::size_t>(r) * cand_dim;
        S* gx = cand_grads.data() + static_cast<std::size_t>(r) * cand_dim;
        const double tv = detail::total_variation(x, channels, height, width,
                                                  gx, config.lambda_tv);
        double l2 = 0.0;
        for (std::size_t i = 0; i < cand_dim; ++i) {
          l2 += static_cast<double>(x[i]) * x[i];
          gx[i] += static_cast<S>(2.0 * config.lambda_l2 * x[i]);
        }
        step_loss[r] += config.lambda_tv * tv + config.lambda_l2 * l2;
      }
    }

    for (int r = 0; r < restarts; ++r) {
      if (!std::isfinite(step_loss[r]))
        throw DivergenceError("attack objective became non-finite at step " +
                              std::to_string(step));
      traces[r].push_back(step_loss[r]);
    }

    optimizer.step(candidates, cand_grads);
    if (!latent)
      for (auto& v : candidates) v = std::clamp(v, S(0), S(1));
  }

  // final candidates, evaluated unmasked; keep the most confident restart
  if (latent) {
    forward(*decoder, candidates.data(), restarts, decoder_ws);
    images = decoder_ws.act.back();
  } else {
    images = candidates;
  }
  forward(target, images.data(), restarts, target_ws);
  IdentityReconstruction out;
  out.label = label;
  out.traces = std::move(traces);
  for (int r = 0; r < restarts; ++r) {
    const S* row = target_ws.act.back().data() + static_cast<std::size_t>(r) * classes;
    const double p = softmax_row(row, classes)[label];
    out.restart_confidences.push_back(p);
    if (p > out.confidence || out.selected_restart < 0) {
      out.confidence = p;
      out.selected_restart = r;
    }
  }
  out.image.resize(image_dim);
  const S* best = images.data() + static_cast<std::size_t>(out.selected_restart) * image_dim;
  for (std::size_t i = 0; i < image_dim; ++i)
    out.image[i] = std::clamp(static_cast<float>(best[i]), 0.0f, 1.0f);
  return out;
}

/// Inverts every label in `labels`, `samples_per_identity` times each with
/// independent derived seeds. Per-label failures are recorded, not fatal.
/// Output is ordered by (label, k) and independent of `jobs`.
template <typename S>
AttackResult attack_all(const Model<S>& target,
                        std::type_identity_t<const Model<S>*> decoder,
                        const std::vector<std::uint32_t>& labels,
                        const AttackConfig& config, int samples_per_identity = 1,
                        int jobs = 1) {
  config.validate();
  if (labels.empty()) throw ConfigError("attack_all: no labels requested");
  if (samples_per_identity < 1)
    throw ConfigError("attack_all: samples_per_identity must be >= 1");

  struct Cell {
    std::uint32_t label;
    int k;
    std::optional<IdentityReconstruction> result;
    bool failed = false;
  };
  std::vector<Cell> cells;
  for (std::uint32_t label : labels)
    for (int k = 0; k < samples_per_identity; ++k)
      cells.push_back(Cell{label, k, std::nullopt, false});

  run_parallel(cells.size(), jobs, [&](std::size_t i) {
    AttackConfig cell_config = config;
    cell_config.seed = derive_seed(config.seed, cells[i].label,
                                   static_cast<std::uint64_t>(cells[i].k));
    try {
      auto recon = invert_identity(target, cells[i].label, decoder, cell_config);
      recon.sample_index = cells[i].k;
      cells[i].result = std::move(recon);
    } catch (const Error&) {
      cells[i].failed = true;
    }
  });

  AttackResult result;
  result.config_hash = attack_config_hash(config);
  result.target_id = hex64(fnv1a64(target.params.data(),
                                   target.params.size() * sizeof(S)));
  for (auto& cell : cells) {
    if (cell.failed) {
      result.failed_labels.push_back(cell.label);
    } else if (cell.result) {
      result.items.push_back(std::move(*cell.result));
    }
  }
  return result;
}

/// Reconstructions as an ImageBatch labeled with their target identities.
inline ImageBatch reconstructions_to_batch(const AttackResult& result, int c,
                                           int h, int w) {
  if (result.items.empty()) throw ShapeError("no reconstructions to collect");
  ImageBatch batch(static_cast<int>(result.items.size()), c, h, w);
  for (std::size_t i = 0; i < result.items.size(); ++i) {
    if (result.items[i].image.size() != batch.pixels_per_image())
      throw ShapeError("reconstruction dimension mismatch");
    std::copy(result.items[i].image.begin(), result.items[i].image.end(),
              batch.image(static_cast<int>(i)));
    batch.labels[i] = result.items[i].label;
  }
  return batch;
}

}  // namespace milab

#endif  // MILAB_ATTACK_HPP_

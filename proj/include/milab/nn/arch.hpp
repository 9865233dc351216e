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

#ifndef MILAB_NN_ARCH_HPP_
#define MILAB_NN_ARCH_HPP_

#include <string>
#include <vector>

#include <json.hpp>

#include "milab/error.hpp"

namespace milab {

enum class ModelKind { kClassifierSmall, kClassifierEval, kDecoder };

struct TensorShape {
  int c = 0;
  int h = 0;
  int w = 0;

  int numel() const { return c * h * w; }
  bool operator==(const TensorShape&) const = default;
};

enum class LayerOp {
  kConv,
  kConvTranspose,
  kDense,
  kRelu,
  kSigmoid,
  kFlatten,
  kReshape,
};

struct LayerDesc {
  LayerOp op = LayerOp::kRelu;
  int in_channels = 0;   // conv/deconv; dense: input width
  int out_channels = 0;  // conv/deconv; dense: output width
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  TensorShape target;    // kReshape only

  bool operator==(const LayerDesc&) const = default;

  static LayerDesc conv(int cin, int cout, int k, int stride, int pad) {
    LayerDesc d;
    d.op = LayerOp::kConv;
    d.in_channels = cin;
    d.out_channels = cout;
    d.kernel = k;
    d.stride = stride;
    d.pad = pad;
    return d;
  }
  static LayerDesc deconv(int cin, int cout, int k, int stride, int pad) {
    LayerDesc d = conv(cin, cout, k, stride, pad);
    d.op = LayerOp::kConvTranspose;
    return d;
  }
  static LayerDesc dense(int in, int out) {
    LayerDesc d;
    d.op = LayerOp::kDense;
    d.in_channels = in;
    d.out_channels = out;
    return d;
  }
  static LayerDesc activation(LayerOp op) {
    LayerDesc d;
    d.op = op;
    return d;
  }
  static LayerDesc flatten() { return activation(LayerOp::kFlatten); }
  static LayerDesc reshape(TensorShape shape) {
    LayerDesc d;
    d.op = LayerOp::kReshape;
    d.target = shape;
    return d;
  }
};

/// Architecture descriptor: an explicit layer chain plus the bookkeeping the
/// rest of the library needs (penultimate width, head size, latent size).
struct ArchSpec {
  ModelKind kind = ModelKind::kClassifierSmall;
  TensorShape input;                // image [C,H,W] or latent [latent_dim,1,1]
  std::vector<LayerDesc> layers;
  int feature_dim = 0;              // classifiers: penultimate width
  int num_classes = 0;              // classifiers
  int latent_dim = 0;               // decoder
  int feature_layer = -1;           // index of the activation used as features

  bool is_classifier() const { return kind != ModelKind::kDecoder; }
  bool operator==(const ArchSpec&) const = default;

  /// Walks the layer chain and returns the shape after each layer.
  /// Throws ConfigError on any inconsistency.
  std::vector<TensorShape> shape_chain() const {
    if (input.numel() <= 0) throw ConfigError("arch input shape is empty");
    std::vector<TensorShape> shapes;
    shapes.push_back(input);
    TensorShape cur = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerDesc& layer = layers[i];
      switch (layer.op) {
        case LayerOp::kConv: {
          if (layer.in_channels != cur.c)
            throw ConfigError("conv layer " + std::to_string(i) +
                              ": in_channels mismatch");
          if (layer.kernel < 1 || layer.stride < 1 || layer.out_channels < 1)
            throw ConfigError("conv layer " + std::to_string(i) + ": bad geometry");
          const int oh = (cur.h + 2 * layer.pad - layer.kernel) / layer.stride + 1;
          const int ow = (cur.w + 2 * layer.pad - layer.kernel) / layer.stride + 1;
          if (oh < 1 || ow < 1)
            throw ConfigError("conv layer " + std::to_string(i) +
                              ": output collapses to zero");
          cur = TensorShape{layer.out_channels, oh, ow};
          break;
        }
        case LayerOp::kConvTranspose: {
          if (layer.in_channels != cur.c)
            throw ConfigError("deconv layer " + std::to_string(i) +
                              ": in_channels mismatch");
          const int oh = (cur.h - 1) * layer.stride - 2 * layer.pad + layer.kernel;
          const int ow = (cur.w - 1) * layer.stride - 2 * layer.pad + layer.kernel;
          if (oh < 1 || ow < 1)
            throw ConfigError("deconv layer " + std::to_string(i) +
                              ": output collapses to zero");
          cur = TensorShape{layer.out_channels, oh, ow};
          break;
        }
        case LayerOp::kDense: {
          if (cur.h != 1 || cur.w != 1)
            throw ConfigError("dense layer " + std::to_string(i) +
                              " expects a flattened input");
          if (layer.in_channels != cur.c)
            throw ConfigError("dense layer " + std::to_string(i) +
                              ": input width mismatch");
          cur = TensorShape{layer.out_channels, 1, 1};
          break;
        }
        case LayerOp::kFlatten:
          cur = TensorShape{cur.numel(), 1, 1};
          break;
        case LayerOp::kReshape:
          if (layer.target.numel() != cur.numel())
            throw ConfigError("reshape layer " + std::to_string(i) +
                              ": element count mismatch");
          cur = layer.target;
          break;
        case LayerOp::kRelu:
        case LayerOp::kSigmoid:
          break;
      }
      shapes.push_back(cur);
    }
    return shapes;
  }

  void validate() const {
    const auto shapes = shape_chain();
    const TensorShape out = shapes.back();
    if (is_classifier()) {
      if (num_classes < 2) throw ConfigError("classifier needs >= 2 classes");
      if (out.c != num_classes || out.h != 1 || out.w != 1)
        throw ConfigError("classifier head does not emit [num_classes]");
      if (feature_layer < 0 || feature_layer >= static_cast<int>(shapes.size()))
        throw ConfigError("feature layer index out of range");
      if (shapes[feature_layer].numel() != feature_dim)
        throw ConfigError("feature layer width != feature_dim");
    } else {
      if (latent_dim < 1) throw ConfigError("decoder needs latent_dim >= 1");
      if (input.c != latent_dim || input.h != 1 || input.w != 1)
        throw ConfigError("decoder input must be [latent_dim,1,1]");
    }
  }
};

namespace arch {

/// Three stride-2 conv stages (16, 32, 64) into a 128-wide penultimate layer.
inline ArchSpec classifier_small(int c, int h, int w, int num_classes,
                                 int feature_dim = 128) {
  ArchSpec a;
  a.kind = ModelKind::kClassifierSmall;
  a.input = TensorShape{c, h, w};
  a.num_classes = num_classes;
  a.feature_dim = feature_dim;
  int ch = c, hh = h, ww = w;
  for (int out : {16, 32, 64}) {
    a.layers.push_back(LayerDesc::conv(ch, out, 3, 2, 1));
    a.layers.push_back(LayerDesc::activation(LayerOp::kRelu));
    ch = out;
    hh = (hh + 1) / 2;
    ww = (ww + 1) / 2;
  }
  a.layers.push_back(LayerDesc::flatten());
  a.layers.push_back(LayerDesc::dense(ch * hh * ww, feature_dim));
  a.layers.push_back(LayerDesc::activation(LayerOp::kRelu));
  a.feature_layer = static_cast<int>(a.layers.size());  // after the ReLU
  a.layers.push_back(LayerDesc::dense(feature_dim, num_classes));
  a.validate();
  return a;
}

/// The architecturally distinct judge: four stages (24, 48, 96, 96) into a
/// 160-wide penultimate layer.
inline ArchSpec classifier_eval(int c, int h, int w, int num_classes,
                                int feature_dim = 160) {
  ArchSpec a;
  a.kind = ModelKind::kClassifierEval;
  a.input = TensorShape{c, h, w};
  a.num_classes = num_classes;
  a.feature_dim = feature_dim;
  int ch = c, hh = h, ww = w;
  for (int out : {24, 48, 96, 96}) {
    a.layers.push_back(LayerDesc::conv(ch, out, 3, 2, 1));
    a.layers.push_back(LayerDesc::activation(LayerOp::kRelu));
    ch = out;
    hh = (hh + 1) / 2;
    ww = (ww + 1) / 2;
  }
  a.layers.push_back(LayerDesc::flatten());
  a.layers.push_back(LayerDesc::dense(ch * hh * ww, feature_dim));
  a.layers.push_back(LayerDesc::activation(LayerOp::kRelu));
  a.feature_layer = static_cast<int>(a.layers.size());
  a.layers.push_back(LayerDesc::dense(feature_dim, num_classes));
  a.validate();
  return a;
}

/// Latent-to-image decoder: dense seed then three stride-2 deconv stages with
/// a sigmoid squash, so outputs always land in [0,1]. Needs h, w % 8 == 0.
inline ArchSpec decoder(int latent_dim, int c, int h, int w) {
  if (h % 8 != 0 || w % 8 != 0)
    throw ConfigError("decoder requires image sides divisible by 8");
  ArchSpec a;
  a.kind = ModelKind::kDecoder;
  a.latent_dim = latent_dim;
  a.input = TensorShape{latent_dim, 1, 1};
  const int seed_h = h / 8, seed_w = w / 8;
  a.layers.push_back(LayerDesc::dense(latent_dim, 64 * seed_h * seed_w));
  a.layers.push_back(LayerDesc::activation(LayerOp::kRelu));
  a.layers.push_back(LayerDesc::reshape(TensorShape{64, seed_h, seed_w}));
  a.layers.push_back(LayerDesc::deconv(64, 32, 4, 2, 1));
  a.layers.push_back(LayerDesc::activation(LayerOp::kRelu));
  a.layers.push_back(LayerDesc::deconv(32, 16, 4, 2, 1));
  a.layers.push_back(LayerDesc::activation(LayerOp::kRelu));
  a.layers.push_back(LayerDesc::deconv(16, c, 4, 2, 1));
  a.layers.push_back(LayerDesc::activation(LayerOp::kSigmoid));
  return a;
}

}  // namespace arch

inline std::string to_string(LayerOp op) {
  switch (op) {
    case LayerOp::kConv: return "conv";
    case LayerOp::kConvTranspose: return "deconv";
    case LayerOp::kDense: return "dense";
    case LayerOp::kRelu: return "relu";
    case LayerOp::kSigmoid: return "sigmoid";
    case LayerOp::kFlatten: return "flatten";
    case LayerOp::kReshape: return "reshape";
  }
  return "relu";
}

inline LayerOp layer_op_from_string(const std::string& name) {
  if (name == "conv") return LayerOp::kConv;
  if (name == "deconv") return LayerOp::kConvTranspose;
  if (name == "dense") return LayerOp::kDense;
  if (name == "relu") return LayerOp::kRelu;
  if (name == "sigmoid") return LayerOp::kSigmoid;
  if (name == "flatten") return LayerOp::kFlatten;
  if (name == "reshape") return LayerOp::kReshape;
  throw ConfigError("unknown layer op: " + name);
}

inline std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kClassifierSmall: return "classifier_small";
    case ModelKind::kClassifierEval: return "classifier_eval";
    case ModelKind::kDecoder: return "decoder";
  }
  return "classifier_small";
}

inline ModelKind model_kind_from_string(const std::string& name) {
  if (name == "classifier_small") return ModelKind::kClassifierSmall;
  if (name == "classifier_eval") return ModelKind::kClassifierEval;
  if (name == "decoder") return ModelKind::kDecoder;
  throw ConfigError("unknown model kind: " + name);
}

inline nlohmann::json arch_to_json(const ArchSpec& a) {
  nlohmann::json j;
  j["kind"] = to_string(a.kind);
  j["input"] = {{"c", a.input.c}, {"h", a.input.h}, {"w", a.input.w}};
  j["feature_dim"] = a.feature_dim;
  j["num_classes"] = a.num_classes;
  j["latent_dim"] = a.latent_dim;
  j["feature_layer"] = a.feature_layer;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : a.layers)
    layers.push_back({{"op", to_string(l.op)},
                      {"cin", l.in_channels},
                      {"cout", l.out_channels},
                      {"k", l.kernel},
                      {"stride", l.stride},
                      {"pad", l.pad},
                      {"target", {l.target.c, l.target.h, l.target.w}}});
  j["layers"] = layers;
  return j;
}

inline ArchSpec arch_from_json(const nlohmann::json& j) {
  ArchSpec a;
  a.kind = model_kind_from_string(j.at("kind").get<std::string>());
  a.input = TensorShape{j.at("input").at("c").get<int>(),
                        j.at("input").at("h").get<int>(),
                        j.at("input").at("w").get<int>()};
  a.feature_dim = j.at("feature_dim").get<int>();
  a.num_classes = j.at("num_classes").get<int>();
  a.latent_dim = j.at("latent_dim").get<int>();
  a.feature_layer = j.at("feature_layer").get<int>();
  for (const auto& l : j.at("layers")) {
    LayerDesc d;
    d.op = layer_op_from_string(l.at("op").get<std::string>());
    d.in_channels = l.at("cin").get<int>();
    d.out_channels = l.at("cout").get<int>();
    d.kernel = l.at("k").get<int>();
    d.stride = l.at("stride").get<int>();
    d.pad = l.at("pad").get<int>();
    d.target = TensorShape{l.at("target")[0].get<int>(),
                           l.at("target")[1].get<int>(),
                           l.at("target")[2].get<int>()};
    a.layers.push_back(d);
  }
  return a;
}

}  // namespace milab

#endif  // MILAB_NN_ARCH_HPP_

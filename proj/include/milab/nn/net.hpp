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

#ifndef MILAB_NN_NET_HPP_
#define MILAB_NN_NET_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "milab/erase.hpp"
#include "milab/error.hpp"
#include "milab/image.hpp"
#include "milab/nn/arch.hpp"
#include "milab/rng.hpp"

namespace milab {

// Minimal static-graph engine: explicit forward/backward per layer over flat
// [B, C, H, W] buffers, with Eigen GEMM doing the heavy lifting via
// im2col/col2im. Everything is single-threaded and order-fixed, so a given
// (model, input) pair always produces bit-identical results.

template <typename S>
using MatMap =
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct EpochStats {
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

/// Everything about how a model was trained, kept alongside the parameters.
struct TrainInfo {
  int epochs = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
  std::string schedule = "const";
  std::string optimizer = "adam";
  std::uint64_t seed = 0;
  double epoch_budget_fraction = 1.0;
  ErasePolicy policy;

  bool operator==(const TrainInfo&) const = default;
};

template <typename S>
struct Model {
  ArchSpec arch;
  std::vector<S> params;
  std::vector<EpochStats> history;
  TrainInfo train_info;

  struct ParamSlot {
    std::size_t offset = 0;
    std::size_t weight_count = 0;
    std::size_t bias_count = 0;
  };
  std::vector<ParamSlot> slots;  // one per layer; zero-sized for no-param ops

  const S* weights(int layer) const { return params.data() + slots[layer].offset; }
  S* weights(int layer) { return params.data() + slots[layer].offset; }
  const S* bias(int layer) const {
    return params.data() + slots[layer].offset + slots[layer].weight_count;
  }
  S* bias(int layer) {
    return params.data() + slots[layer].offset + slots[layer].weight_count;
  }
};

namespace detail {

inline std::size_t layer_weight_count(const LayerDesc& l) {
  switch (l.op) {
    case LayerOp::kConv:
      return static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
    case LayerOp::kConvTranspose:
      return static_cast<std::size_t>(l.in_channels) * l.out_channels * l.kernel * l.kernel;
    case LayerOp::kDense:
      return static_cast<std::size_t>(l.out_channels) * l.in_channels;
    default:
      return 0;
  }
}

inline std::size_t layer_bias_count(const LayerDesc& l) {
  switch (l.op) {
    case LayerOp::kConv:
    case LayerOp::kConvTranspose:
    case LayerOp::kDense:
      return static_cast<std::size_t>(l.out_channels);
    default:
      return 0;
  }
}

// col[(c*k*k + ky*k + kx), (oy*Wo + ox)] = in[c][oy*s + ky - p][ox*s + kx - p]
template <typename S>
void im2col(const S* in, int c, int h, int w, int k, int stride, int pad,
            int oh, int ow, S* col) {
  const int m = oh * ow;
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        S* row = col + (static_cast<std::size_t>(ch) * k * k + ky * k + kx) * m;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < ow; ++ox) row[oy * ow + ox] = S(0);
            continue;
          }
          const S* in_row = in + (static_cast<std::size_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            row[oy * ow + ox] = (ix < 0 || ix >= w) ? S(0) : in_row[ix];
          }
        }
      }
}

// scatter-add transpose of im2col
template <typename S>
void col2im_add(const S* col, int c, int h, int w, int k, int stride, int pad,
                int oh, int ow, S* out) {
  const int m = oh * ow;
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const S* row = col + (static_cast<std::size_t>(ch) * k * k + ky * k + kx) * m;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          S* out_row = out + (static_cast<std::size_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) out_row[ix] += row[oy * ow + ox];
          }
        }
      }
}

}  // namespace detail

/// Deterministic He-normal initialization; same (arch, seed) gives identical
/// parameter bytes.
template <typename S>
Model<S> build_model(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  Model<S> model;
  model.arch = arch;
  std::size_t total = 0;
  for (const auto& layer : arch.layers) {
    typename Model<S>::ParamSlot slot;
    slot.offset = total;
    slot.weight_count = detail::layer_weight_count(layer);
    slot.bias_count = detail::layer_bias_count(layer);
    total += slot.weight_count + slot.bias_count;
    model.slots.push_back(slot);
  }
  model.params.assign(total, S(0));
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& layer = arch.layers[i];
    const auto& slot = model.slots[i];
    if (slot.weight_count == 0) continue;
    std::size_t fan_in = 0;
    switch (layer.op) {
      case LayerOp::kConv:
        fan_in = static_cast<std::size_t>(layer.in_channels) * layer.kernel * layer.kernel;
        break;
      case LayerOp::kConvTranspose:
        // adjoint of a conv with fan_in over the output side
        fan_in = static_cast<std::size_t>(layer.in_channels) * layer.kernel * layer.kernel /
                 (layer.stride * layer.stride);
        if (fan_in == 0) fan_in = layer.in_channels;
        break;
      case LayerOp::kDense:
        fan_in = static_cast<std::size_t>(layer.in_channels);
        break;
      default:
        break;
    }
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    for (std::size_t p = 0; p < slot.weight_count; ++p)
      model.params[slot.offset + p] = static_cast<S>(stddev * rng.normal());
    // biases start at zero
  }
  return model;
}

/// Per-call activation storage; a model is immutable during forward/backward,
/// so concurrent callers just use their own workspaces.
template <typename S>
struct Workspace {
  int batch = 0;
  std::vector<std::vector<S>> act;   // act[0] = input, act[i+1] = layer i output
  std::vector<S> col;                // im2col scratch
};

template <typename S>
void forward(const Model<S>& model, const S* input, int batch, Workspace<S>& ws) {
  const auto shapes = model.arch.shape_chain();
  ws.batch = batch;
  ws.act.resize(shapes.size());
  for (std::size_t i = 0; i < shapes.size(); ++i)
    ws.act[i].assign(static_cast<std::size_t>(batch) * shapes[i].numel(), S(0));
  std::memcpy(ws.act[0].data(), input,
              static_cast<std::size_t>(batch) * shapes[0].numel() * sizeof(S));

  for (std::size_t li = 0; li < model.arch.layers.size(); ++li) {
    const LayerDesc& layer = model.arch.layers[li];
    const TensorShape in_shape = shapes[li];
    const TensorShape out_shape = shapes[li + 1];
    const std::vector<S>& in = ws.act[li];
    std::vector<S>& out = ws.act[li + 1];

    switch (layer.op) {
      case LayerOp::kConv: {
        const int k = layer.kernel, stride = layer.stride, pad = layer.pad;
        const int kk = layer.in_channels * k * k;
        const int m = out_shape.h * out_shape.w;
        ws.col.resize(static_cast<std::size_t>(kk) * m);
        ConstMatMap<S> w_mat(model.weights(static_cast<int>(li)), layer.out_channels, kk);
        for (int b = 0; b < batch; ++b) {
          detail::im2col(in.data() + static_cast<std::size_t>(b) * in_shape.numel(),
                         in_shape.c, in_shape.h, in_shape.w, k, stride, pad,
                         out_shape.h, out_shape.w, ws.col.data());
          ConstMatMap<S> col_mat(ws.col.data(), kk, m);
          MatMap<S> out_mat(out.data() + static_cast<std::size_t>(b) * out_shape.numel(),
                            layer.out_channels, m);
          out_mat.noalias() = w_mat * col_mat;
          const S* bias = model.bias(static_cast<int>(li));
          for (int oc = 0; oc < layer.out_channels; ++oc)
            out_mat.row(oc).array() += bias[oc];
        }
        break;
      }
      case LayerOp::kConvTranspose: {
        const int k = layer.kernel, stride = layer.stride, pad = layer.pad;
        const int kk = layer.out_channels * k * k;
        const int m_in = in_shape.h * in_shape.w;
        ws.col.resize(static_cast<std::size_t>(kk) * m_in);
        ConstMatMap<S> v_mat(model.weights(static_cast<int>(li)), layer.in_channels, kk);
        for (int b = 0; b < batch; ++b) {
          ConstMatMap<S> in_mat(in.data() + static_cast<std::size_t>(b) * in_shape.numel(),
                                in_shape.c, m_in);
          MatMap<S> col_mat(ws.col.data(), kk, m_in);
          col_mat.noalias() = v_mat.transpose() * in_mat;
          S* out_img = out.data() + static_cast<std::size_t>(b) * out_shape.numel();
          detail::col2im_add(ws.col.data(), out_shape.c, out_shape.h, out_shape.w,
                             k, stride, pad, in_shape.h, in_shape.w, out_img);
          const S* bias = model.bias(static_cast<int>(li));
          for (int oc = 0; oc < out_shape.c; ++oc) {
            S* plane = out_img + static_cast<std::size_t>(oc) * out_shape.h * out_shape.w;
            for (int p = 0; p < out_shape.h * out_shape.w; ++p) plane[p] += bias[oc];
          }
        }
        break;
      }
      case LayerOp::kDense: {
        ConstMatMap<S> w_mat(model.weights(static_cast<int>(li)), layer.out_channels,
                             layer.in_channels);
        const S* bias = model.bias(static_cast<int>(li));
        // row-at-a-time keeps each sample's result independent of how the
        // batch is composed (same kernel for batch 1 and batch N)
        for (int b = 0; b < batch; ++b) {
          ConstMatMap<S> in_row(in.data() + static_cast<std::size_t>(b) * layer.in_channels,
                                1, layer.in_channels);
          MatMap<S> out_row(out.data() + static_cast<std::size_t>(b) * layer.out_channels,
                            1, layer.out_channels);
          out_row.noalias() = in_row * w_mat.transpose();
          for (int oc = 0; oc < layer.out_channels; ++oc) out_row(0, oc) += bias[oc];
        }
        break;
      }
      case LayerOp::kRelu:
        for (std::size_t p = 0; p < in.size(); ++p)
          out[p] = in[p] > S(0) ? in[p] : S(0);
        break;
      case LayerOp::kSigmoid:
        for (std::size_t p = 0; p < in.size(); ++p)
          out[p] = S(1) / (S(1) + std::exp(-in[p]));
        break;
      case LayerOp::kFlatten:
      case LayerOp::kReshape:
        out = in;
        break;
    }
  }
}

/// Backpropagates `grad_last` (gradient w.r.t. the final activation).
/// Parameter gradients are accumulated into `grad_params` (same layout as
/// model.params); pass `grad_input` to also get the gradient w.r.t. the input.
template <typename S>
void backward(const Model<S>& model, Workspace<S>& ws,
              const std::vector<S>& grad_last,
              std::type_identity_t<std::vector<S>*> grad_params,
              std::type_identity_t<std::vector<S>*> grad_input) {
  const auto shapes = model.arch.shape_chain();
  const int batch = ws.batch;
  if (grad_last.size() != static_cast<std::size_t>(batch) * shapes.back().numel())
    throw ShapeError("backward: grad_last size mismatch");

  std::vector<S> grad_out = grad_last;
  std::vector<S> grad_in;
  std::vector<S> col_grad;

  for (int li = static_cast<int>(model.arch.layers.size()) - 1; li >= 0; --li) {
    const LayerDesc& layer = model.arch.layers[li];
    const TensorShape in_shape = shapes[li];
    const TensorShape out_shape = shapes[li + 1];
    const std::vector<S>& in = ws.act[li];
    const std::vector<S>& out = ws.act[li + 1];
    const bool need_grad_in = li > 0 || grad_input != nullptr;
    grad_in.assign(static_cast<std::size_t>(batch) * in_shape.numel(), S(0));

    switch (layer.op) {
      case LayerOp::kConv: {
        const int k = layer.kernel, stride = layer.stride, pad = layer.pad;
        const int kk = layer.in_channels * k * k;
        const int m = out_shape.h * out_shape.w;
        ws.col.resize(static_cast<std::size_t>(kk) * m);
        col_grad.resize(static_cast<std::size_t>(kk) * m);
        ConstMatMap<S> w_mat(model.weights(li), layer.out_channels, kk);
        for (int b = 0; b < batch; ++b) {
          ConstMatMap<S> go_mat(grad_out.data() + static_cast<std::size_t>(b) * out_shape.numel(),
                                layer.out_channels, m);
          if (grad_params) {
            detail::im2col(in.data() + static_cast<std::size_t>(b) * in_shape.numel(),
                           in_shape.c, in_shape.h, in_shape.w, k, stride, pad,
                           out_shape.h, out_shape.w, ws.col.data());
            ConstMatMap<S> col_mat(ws.col.data(), kk, m);
            MatMap<S> gw(grad_params->data() + model.slots[li].offset,
                         layer.out_channels, kk);
            gw.noalias() += go_mat * col_mat.transpose();
            S* gb = grad_params->data() + model.slots[li].offset +
                    model.slots[li].weight_count;
            for (int oc = 0; oc < layer.out_channels; ++oc)
              gb[oc] += go_mat.row(oc).sum();
          }
          if (need_grad_in) {
            MatMap<S> gcol(col_grad.data(), kk, m);
            gcol.noalias() = w_mat.transpose() * go_mat;
            detail::col2im_add(col_grad.data(), in_shape.c, in_shape.h, in_shape.w,
                               k, stride, pad, out_shape.h, out_shape.w,
                               grad_in.data() + static_cast<std::size_t>(b) * in_shape.numel());
          }
        }
        break;
      }
      case LayerOp::kConvTranspose: {
        const int k = layer.kernel, stride = layer.stride, pad = layer.pad;
        const int kk = layer.out_channels * k * k;
        const int m_in = in_shape.h * in_shape.w;
        ws.col.resize(static_cast<std::size_t>(kk) * m_in);
        ConstMatMap<S> v_mat(model.weights(li), layer.in_channels, kk);
        for (int b = 0; b < batch; ++b) {
          // im2col of the output-side gradient, in the adjoint conv's geometry
          detail::im2col(grad_out.data() + static_cast<std::size_t>(b) * out_shape.numel(),
                         out_shape.c, out_shape.h, out_shape.w, k, stride, pad,
                         in_shape.h, in_shape.w, ws.col.data());
          ConstMatMap<S> gcol_mat(ws.col.data(), kk, m_in);
          if (grad_params) {
            ConstMatMap<S> in_mat(in.data() + static_cast<std::size_t>(b) * in_shape.numel(),
                                  in_shape.c, m_in);
            MatMap<S> gv(grad_params->data() + model.slots[li].offset,
                         layer.in_channels, kk);
            gv.noalias() += in_mat * gcol_mat.transpose();
            S* gb = grad_params->data() + model.slots[li].offset +
                    model.slots[li].weight_count;
            const S* go = grad_out.data() + static_cast<std::size_t>(b) * out_shape.numel();
            for (int oc = 0; oc < out_shape.c; ++oc) {
              S sum = S(0);
              const S* plane = go + static_cast<std::size_t>(oc) * out_shape.h * out_shape.w;
              for (int p = 0; p < out_shape.h * out_shape.w; ++p) sum += plane[p];
              gb[oc] += sum;
            }
          }
          if (need_grad_in) {
            MatMap<S> gi_mat(grad_in.data() + static_cast<std::size_t>(b) * in_shape.numel(),
                             in_shape.c, m_in);
            gi_mat.noalias() = v_mat * gcol_mat;
          }
        }
        break;
      }
      case LayerOp::kDense: {
        ConstMatMap<S> go_mat(grad_out.data(), batch, layer.out_channels);
        ConstMatMap<S> in_mat(in.data(), batch, layer.in_channels);
        ConstMatMap<S> w_mat(model.weights(li), layer.out_channels, layer.in_channels);
        if (grad_params) {
          MatMap<S> gw(grad_params->data() + model.slots[li].offset,
                       layer.out_channels, layer.in_channels);
          gw.noalias() += go_mat.transpose() * in_mat;
          S* gb = grad_params->data() + model.slots[li].offset +
                  model.slots[li].weight_count;
          for (int oc = 0; oc < layer.out_channels; ++oc)
            gb[oc] += go_mat.col(oc).sum();
        }
        if (need_grad_in) {
          for (int b = 0; b < batch; ++b) {
            ConstMatMap<S> go_row(grad_out.data() + static_cast<std::size_t>(b) * layer.out_channels,
                                  1, layer.out_channels);
            MatMap<S> gi_row(grad_in.data() + static_cast<std::size_t>(b) * layer.in_channels,
                             1, layer.in_channels);
            gi_row.noalias() = go_row * w_mat;
          }
        }
        break;
      }
      case LayerOp::kRelu:
        for (std::size_t p = 0; p < grad_out.size(); ++p)
          grad_in[p] = out[p] > S(0) ? grad_out[p] : S(0);
        break;
      case LayerOp::kSigmoid:
        for (std::size_t p = 0; p < grad_out.size(); ++p)
          grad_in[p] = grad_out[p] * out[p] * (S(1) - out[p]);
        break;
      case LayerOp::kFlatten:
      case LayerOp::kReshape:
        grad_in = grad_out;
        break;
    }
    grad_out.swap(grad_in);
  }
  if (grad_input) *grad_input = std::move(grad_out);
}

/// Mean softmax cross-entropy over the batch; writes d(loss)/d(logits).
template <typename S>
double softmax_cross_entropy(const std::vector<S>& logits, int batch, int classes,
                             const std::uint32_t* labels,
                             std::type_identity_t<std::vector<S>*> dlogits) {
  if (dlogits) dlogits->assign(logits.size(), S(0));
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const S* row = logits.data() + static_cast<std::size_t>(b) * classes;
    double max_logit = row[0];
    for (int c = 1; c < classes; ++c) max_logit = std::max<double>(max_logit, row[c]);
    double z = 0.0;
    for (int c = 0; c < classes; ++c) z += std::exp(static_cast<double>(row[c]) - max_logit);
    const double log_z = std::log(z) + max_logit;
    total += log_z - static_cast<double>(row[labels[b]]);
    if (dlogits) {
      S* drow = dlogits->data() + static_cast<std::size_t>(b) * classes;
      for (int c = 0; c < classes; ++c) {
        const double p = std::exp(static_cast<double>(row[c]) - log_z);
        drow[c] = static_cast<S>((p - (labels[b] == static_cast<std::uint32_t>(c) ? 1.0 : 0.0)) / batch);
      }
    }
  }
  return total / batch;
}

/// Softmax probabilities of one logits row.
template <typename S>
std::vector<double> softmax_row(const S* row, int classes) {
  double max_logit = row[0];
  for (int c = 1; c < classes; ++c) max_logit = std::max<double>(max_logit, row[c]);
  double z = 0.0;
  std::vector<double> probs(classes);
  for (int c = 0; c < classes; ++c) {
    probs[c] = std::exp(static_cast<double>(row[c]) - max_logit);
    z += probs[c];
  }
  for (auto& p : probs) p /= z;
  return probs;
}

/// Adam with a fixed step size. Moment buffers are kept in double so the
/// update is well-behaved for float parameters too.
template <typename S>
class Adam {
public:
  explicit Adam(std::size_t size, double lr)
      : lr_(lr), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::vector<S>& params, const std::vector<S>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = static_cast<double>(grads[i]);
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] = static_cast<S>(static_cast<double>(params[i]) -
                                 lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }

private:
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<double> m_, v_;
};

namespace detail {

inline nlohmann::json train_info_to_json(const TrainInfo& info) {
  nlohmann::json j;
  j["epochs"] = info.epochs;
  j["batch_size"] = info.batch_size;
  j["learning_rate"] = info.learning_rate;
  j["schedule"] = info.schedule;
  j["optimizer"] = info.optimizer;
  j["seed"] = info.seed;
  j["epoch_budget_fraction"] = info.epoch_budget_fraction;
  j["policy"] = policy_to_json(info.policy);
  return j;
}

inline TrainInfo train_info_from_json(const nlohmann::json& j) {
  TrainInfo info;
  info.epochs = j.at("epochs").get<int>();
  info.batch_size = j.at("batch_size").get<int>();
  info.learning_rate = j.at("learning_rate").get<double>();
  info.schedule = j.at("schedule").get<std::string>();
  info.optimizer = j.at("optimizer").get<std::string>();
  info.seed = j.at("seed").get<std::uint64_t>();
  info.epoch_budget_fraction = j.at("epoch_budget_fraction").get<double>();
  info.policy = policy_from_json(j.at("policy"));
  return info;
}

}  // namespace detail

/// Checkpoint container: a JSON header (arch, history, train config) followed
/// by the raw parameter bytes. Loading restores bit-identical parameters.
template <typename S>
void save_model(const Model<S>& model, const std::string& path) {
  nlohmann::json header;
  header["magic"] = "milab-checkpoint";
  header["version"] = 1;
  header["dtype"] = sizeof(S) == 4 ? "f32" : "f64";
  header["arch"] = arch_to_json(model.arch);
  header["param_count"] = model.params.size();
  nlohmann::json history = nlohmann::json::array();
  for (const auto& e : model.history)
    history.push_back({{"train_loss", e.train_loss},
                       {"train_acc", e.train_acc},
                       {"test_acc", e.test_acc}});
  header["history"] = history;
  header["train_info"] = detail::train_info_to_json(model.train_info);

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  out.write(reinterpret_cast<const char*>(model.params.data()),
            static_cast<std::streamsize>(model.params.size() * sizeof(S)));
  if (!out) throw IoError("short write to checkpoint: " + path);
}

template <typename S>
Model<S> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || header_len > (1u << 26)) throw FormatError("corrupt checkpoint header");
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt checkpoint json: " + std::string(e.what()));
  }
  if (header.value("magic", "") != "milab-checkpoint")
    throw FormatError("not a milab checkpoint: " + path);
  const std::string dtype = header.at("dtype").get<std::string>();
  if (dtype != (sizeof(S) == 4 ? "f32" : "f64"))
    throw FormatError("checkpoint dtype " + dtype + " does not match build");

  Model<S> model = build_model<S>(arch_from_json(header.at("arch")), 0);
  const auto count = header.at("param_count").get<std::size_t>();
  if (count != model.params.size())
    throw FormatError("checkpoint parameter count mismatch");
  in.read(reinterpret_cast<char*>(model.params.data()),
          static_cast<std::streamsize>(count * sizeof(S)));
  if (!in) throw FormatError("truncated checkpoint parameters");
  model.history.clear();
  for (const auto& e : header.at("history"))
    model.history.push_back({e.at("train_loss").get<double>(),
                             e.at("train_acc").get<double>(),
                             e.at("test_acc").get<double>()});
  model.train_info = detail::train_info_from_json(header.at("train_info"));
  return model;
}

}  // namespace milab

#endif  // MILAB_NN_NET_HPP_

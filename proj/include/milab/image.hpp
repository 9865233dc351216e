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

#ifndef MILAB_IMAGE_HPP_
#define MILAB_IMAGE_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "milab/error.hpp"

namespace milab {

/// A batch of images as [N, C, H, W] float32 intensities in [0,1] plus
/// integer class labels.
struct ImageBatch {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> data;            // C-order [N, C, H, W]
  std::vector<std::uint32_t> labels;  // [N]

  ImageBatch() = default;
  ImageBatch(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0f),
        labels(static_cast<std::size_t>(n_), 0) {}

  std::size_t pixels_per_image() const {
    return static_cast<std::size_t>(c) * h * w;
  }

  float& at(int i, int ch, int y, int x) {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  float at(int i, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }

  const float* image(int i) const { return data.data() + i * pixels_per_image(); }
  float* image(int i) { return data.data() + i * pixels_per_image(); }

  bool same_geometry(const ImageBatch& other) const {
    return c == other.c && h == other.h && w == other.w;
  }

  bool operator==(const ImageBatch& other) const {
    return n == other.n && c == other.c && h == other.h && w == other.w &&
           data == other.data && labels == other.labels;
  }
};

/// Throws on NaN/Inf pixels or label >= num_classes.
inline void validate_batch(const ImageBatch& batch, std::uint32_t num_classes) {
  if (batch.n <= 0) throw InvariantError("batch is empty");
  if (batch.data.size() != static_cast<std::size_t>(batch.n) * batch.pixels_per_image())
    throw InvariantError("batch data size does not match [N,C,H,W]");
  if (batch.labels.size() != static_cast<std::size_t>(batch.n))
    throw InvariantError("label count does not match batch size");
  for (float v : batch.data)
    if (!std::isfinite(v)) throw InvariantError("batch contains non-finite pixel");
  for (std::uint32_t label : batch.labels)
    if (label >= num_classes)
      throw InvariantError("label " + std::to_string(label) + " outside class range [0, " +
                           std::to_string(num_classes) + ")");
}

/// Empirical per-channel mean intensities of a batch.
inline std::vector<float> channel_means(const ImageBatch& batch) {
  std::vector<double> sums(batch.c, 0.0);
  for (int i = 0; i < batch.n; ++i)
    for (int ch = 0; ch < batch.c; ++ch)
      for (int y = 0; y < batch.h; ++y)
        for (int x = 0; x < batch.w; ++x) sums[ch] += batch.at(i, ch, y, x);
  const double per_channel = static_cast<double>(batch.n) * batch.h * batch.w;
  std::vector<float> means(batch.c);
  for (int ch = 0; ch < batch.c; ++ch)
    means[ch] = static_cast<float>(sums[ch] / per_channel);
  return means;
}

}  // namespace milab

#endif  // MILAB_IMAGE_HPP_

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

#ifndef MILAB_DATASET_HPP_
#define MILAB_DATASET_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "milab/error.hpp"
#include "milab/image.hpp"
#include "milab/rng.hpp"

namespace milab {

// Deterministic synthetic identity dataset. Each identity is a fixed
// composition of low-frequency blobs on a tilted sinusoidal background;
// samples of the identity differ by sub-pixel translation, brightness and
// additive noise. Private and public splits use disjoint identity streams.

struct DatasetProvenance {
  std::uint64_t seed = 0;
  int num_identities = 0;
  int samples_per_identity = 0;
  double max_shift_px = 3.0;
  double noise_sigma = 0.03;
  double brightness_delta = 0.10;

  bool operator==(const DatasetProvenance&) const = default;
};

struct DatasetSplit {
  ImageBatch images;
  std::vector<std::uint64_t> identity_ids;  // labels index into this list

  bool operator==(const DatasetSplit&) const = default;
};

struct DatasetBundle {
  DatasetSplit private_split;
  DatasetSplit public_split;
  int width = 0;
  int height = 0;
  int channels = 0;
  DatasetProvenance provenance;

  bool operator==(const DatasetBundle&) const = default;
};

namespace detail {

inline constexpr std::uint64_t kTagPrivate = 0xA1;
inline constexpr std::uint64_t kTagPublic = 0xA2;

struct Blob {
  double cx, cy;       // center in unit coordinates
  double sigma;        // radius
  double stretch;      // ellipse stretch along a random axis
  double angle;
  double amp[3];       // per-channel amplitude
};

struct IdentityPattern {
  double base[3];
  double wave_amp[3];
  double wave_fx, wave_fy, wave_phase;
  std::vector<Blob> blobs;

  double eval(int channel, double u, double v) const {
    double value = base[channel] +
                   wave_amp[channel] *
                       std::sin(2.0 * 3.14159265358979323846 *
                                (wave_fx * u + wave_fy * v) + wave_phase);
    for (const auto& b : blobs) {
      const double du = u - b.cx;
      const double dv = v - b.cy;
      const double ca = std::cos(b.angle), sa = std::sin(b.angle);
      const double x1 = (ca * du + sa * dv) / (b.sigma * b.stretch);
      const double x2 = (-sa * du + ca * dv) / b.sigma;
      value += b.amp[channel] * std::exp(-0.5 * (x1 * x1 + x2 * x2));
    }
    return value;
  }
};

inline IdentityPattern make_identity_pattern(std::uint64_t identity_seed,
                                             int channels) {
  Rng rng(identity_seed);
  IdentityPattern p;
  for (int ch = 0; ch < 3; ++ch)
    p.base[ch] = ch < channels ? rng.uniform(0.25, 0.45) : 0.0;
  for (int ch = 0; ch < 3; ++ch)
    p.wave_amp[ch] = ch < channels ? rng.uniform(0.03, 0.10) : 0.0;
  p.wave_fx = rng.uniform(0.5, 1.8);
  p.wave_fy = rng.uniform(0.5, 1.8);
  p.wave_phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const int blob_count = static_cast<int>(rng.uniform_int(5, 7));
  for (int b = 0; b < blob_count; ++b) {
    Blob blob;
    blob.cx = rng.uniform(0.18, 0.82);
    blob.cy = rng.uniform(0.18, 0.82);
    blob.sigma = rng.uniform(0.06, 0.16);
    blob.stretch = rng.uniform(0.6, 1.7);
    blob.angle = rng.uniform(0.0, 3.14159265358979323846);
    for (int ch = 0; ch < 3; ++ch)
      blob.amp[ch] = ch < channels ? rng.uniform(-0.45, 0.65) : 0.0;
    p.blobs.push_back(blob);
  }
  return p;
}

inline DatasetSplit generate_split(std::uint64_t seed, std::uint64_t role_tag,
                                   int num_identities, int samples_per_identity,
                                   int width, int height, int channels,
                                   const DatasetProvenance& prov) {
  DatasetSplit split;
  split.images = ImageBatch(num_identities * samples_per_identity, channels,
                            height, width);
  for (int identity = 0; identity < num_identities; ++identity) {
    const std::uint64_t identity_seed =
        derive_seed(seed, role_tag, static_cast<std::uint64_t>(identity));
    split.identity_ids.push_back(identity_seed);
    const IdentityPattern pattern = make_identity_pattern(identity_seed, channels);

    for (int sample = 0; sample < samples_per_identity; ++sample) {
      const int row = identity * samples_per_identity + sample;
      split.images.labels[row] = static_cast<std::uint32_t>(identity);
      Rng rng(derive_seed(identity_seed, static_cast<std::uint64_t>(sample)));
      const double dx = rng.uniform(-prov.max_shift_px, prov.max_shift_px);
      const double dy = rng.uniform(-prov.max_shift_px, prov.max_shift_px);
      const double brightness =
          rng.uniform(1.0 - prov.brightness_delta, 1.0 + prov.brightness_delta);
      for (int ch = 0; ch < channels; ++ch)
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x) {
            const double u = (x + 0.5 - dx) / width;
            const double v = (y + 0.5 - dy) / height;
            double value = brightness * pattern.eval(ch, u, v) +
                           prov.noise_sigma * rng.normal();
            value = std::clamp(value, 0.0, 1.0);
            split.images.at(row, ch, y, x) = static_cast<float>(value);
          }
    }
  }
  return split;
}

inline void write_bytes(const std::filesystem::path& path, const void* data,
                        std::size_t len) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!out) throw IoError("short write to " + path.string());
}

inline std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("missing file: " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<char> bytes(size);
  in.seekg(0);
  in.read(bytes.data(), static_cast<std::streamsize>(size));
  if (!in) throw IoError("short read from " + path.string());
  return bytes;
}

}  // namespace detail

/// Generates the two disjoint-identity splits. Bit-deterministic in `seed`.
inline DatasetBundle generate_synthfaces(int num_identities_per_split,
                                         int samples_per_identity, int width,
                                         int height, int channels,
                                         std::uint64_t seed) {
  if (num_identities_per_split < 2)
    throw ConfigError("need at least 2 identities per split");
  if (samples_per_identity < 2)
    throw ConfigError("need at least 2 samples per identity");
  if (width < 16 || height < 16)
    throw ConfigError("image sides must be >= 16");
  if (channels < 1 || channels > 3)
    throw ConfigError("channels must be in [1,3]");

  DatasetBundle bundle;
  bundle.width = width;
  bundle.height = height;
  bundle.channels = channels;
  bundle.provenance.seed = seed;
  bundle.provenance.num_identities = num_identities_per_split;
  bundle.provenance.samples_per_identity = samples_per_identity;

  bundle.private_split = detail::generate_split(
      seed, detail::kTagPrivate, num_identities_per_split, samples_per_identity,
      width, height, channels, bundle.provenance);
  bundle.public_split = detail::generate_split(
      seed, detail::kTagPublic, num_identities_per_split, samples_per_identity,
      width, height, channels, bundle.provenance);
  return bundle;
}

namespace detail {

inline void save_split(const DatasetSplit& split, const DatasetBundle& bundle,
                       const std::string& role,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["width"] = bundle.width;
  meta["height"] = bundle.height;
  meta["channels"] = bundle.channels;
  meta["num_identities"] = bundle.provenance.num_identities;
  meta["samples_per_identity"] = bundle.provenance.samples_per_identity;
  meta["seed"] = bundle.provenance.seed;
  meta["role"] = role;
  meta["format_version"] = 1;
  std::ofstream out(dir / "meta.json");
  if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << "\n";

  write_bytes(dir / "images.bin", split.images.data.data(),
              split.images.data.size() * sizeof(float));
  write_bytes(dir / "labels.bin", split.images.labels.data(),
              split.images.labels.size() * sizeof(std::uint32_t));
}

inline DatasetSplit load_split(const std::filesystem::path& dir,
                               DatasetBundle& bundle, const std::string& role) {
  const auto meta_path = dir / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw FormatError("missing file: " + meta_path.string());
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt meta.json: " + std::string(e.what()));
  }
  for (const char* key :
       {"width", "height", "channels", "num_identities", "samples_per_identity",
        "seed", "role", "format_version"})
    if (!meta.contains(key))
      throw FormatError(std::string("meta.json missing key: ") + key);
  if (meta["format_version"].get<int>() != 1)
    throw FormatError("unsupported format_version");
  if (meta["role"].get<std::string>() != role)
    throw FormatError("split role mismatch: expected " + role);

  bundle.width = meta["width"].get<int>();
  bundle.height = meta["height"].get<int>();
  bundle.channels = meta["channels"].get<int>();
  bundle.provenance.seed = meta["seed"].get<std::uint64_t>();
  bundle.provenance.num_identities = meta["num_identities"].get<int>();
  bundle.provenance.samples_per_identity = meta["samples_per_identity"].get<int>();

  const int n = bundle.provenance.num_identities *
                bundle.provenance.samples_per_identity;
  DatasetSplit split;
  split.images = ImageBatch(n, bundle.channels, bundle.height, bundle.width);

  const auto image_bytes = read_bytes(dir / "images.bin");
  const std::size_t expected_bytes = split.images.data.size() * sizeof(float);
  if (image_bytes.size() != expected_bytes)
    throw FormatError("images.bin: expected " + std::to_string(expected_bytes) +
                      " bytes, found " + std::to_string(image_bytes.size()));
  std::memcpy(split.images.data.data(), image_bytes.data(), expected_bytes);

  const auto label_bytes = read_bytes(dir / "labels.bin");
  const std::size_t expected_label_bytes = static_cast<std::size_t>(n) * sizeof(std::uint32_t);
  if (label_bytes.size() != expected_label_bytes)
    throw FormatError("labels.bin: expected " + std::to_string(expected_label_bytes) +
                      " bytes, found " + std::to_string(label_bytes.size()));
  std::memcpy(split.images.labels.data(), label_bytes.data(), expected_label_bytes);

  const std::uint64_t role_tag =
      role == "private" ? detail::kTagPrivate : detail::kTagPublic;
  for (int identity = 0; identity < bundle.provenance.num_identities; ++identity)
    split.identity_ids.push_back(derive_seed(bundle.provenance.seed, role_tag,
                                             static_cast<std::uint64_t>(identity)));
  return split;
}

}  // namespace detail

/// Validates every bundle invariant: disjoint identity sets, finite pixels in
/// [0,1], labels inside the class range.
inline void validate_bundle(const DatasetBundle& bundle) {
  const auto num_classes =
      static_cast<std::uint32_t>(bundle.provenance.num_identities);
  validate_batch(bundle.private_split.images, num_classes);
  validate_batch(bundle.public_split.images, num_classes);
  for (float v : bundle.private_split.images.data)
    if (v < 0.0f || v > 1.0f) throw InvariantError("pixel outside [0,1]");
  for (float v : bundle.public_split.images.data)
    if (v < 0.0f || v > 1.0f) throw InvariantError("pixel outside [0,1]");
  std::set<std::uint64_t> private_ids(bundle.private_split.identity_ids.begin(),
                                      bundle.private_split.identity_ids.end());
  for (std::uint64_t id : bundle.public_split.identity_ids)
    if (private_ids.count(id))
      throw InvariantError("private and public identity sets intersect");
}

/// Splits a block-ordered batch (samples grouped by identity) into train and
/// test parts, holding out the last `holdout` samples of every identity.
inline std::pair<ImageBatch, ImageBatch> split_holdout(const ImageBatch& all,
                                                       int samples_per_identity,
                                                       int holdout) {
  if (samples_per_identity < 2 || holdout < 1 || holdout >= samples_per_identity)
    throw ConfigError("bad holdout split");
  if (all.n % samples_per_identity != 0)
    throw ShapeError("batch size is not a multiple of samples_per_identity");
  const int num_ids = all.n / samples_per_identity;
  const int train_per = samples_per_identity - holdout;
  ImageBatch train(num_ids * train_per, all.c, all.h, all.w);
  ImageBatch test(num_ids * holdout, all.c, all.h, all.w);
  const std::size_t dim = all.pixels_per_image();
  int tr = 0, te = 0;
  for (int i = 0; i < all.n; ++i) {
    const bool is_test = i % samples_per_identity >= train_per;
    ImageBatch& dst = is_test ? test : train;
    int& row = is_test ? te : tr;
    std::copy_n(all.image(i), dim, dst.image(row));
    dst.labels[row] = all.labels[i];
    ++row;
  }
  return {std::move(train), std::move(test)};
}

/// Writes `<path>/private/{meta.json,images.bin,labels.bin}` and the same
/// under `<path>/public/`. Save -> load round-trips bit-identically.
inline void save_dataset(const DatasetBundle& bundle, const std::string& path) {
  const std::filesystem::path root(path);
  detail::save_split(bundle.private_split, bundle, "private", root / "private");
  detail::save_split(bundle.public_split, bundle, "public", root / "public");
}

inline DatasetBundle load_dataset(const std::string& path) {
  const std::filesystem::path root(path);
  DatasetBundle bundle;
  bundle.private_split = detail::load_split(root / "private", bundle, "private");
  bundle.public_split = detail::load_split(root / "public", bundle, "public");
  validate_bundle(bundle);
  return bundle;
}

}  // namespace milab

#endif  // MILAB_DATASET_HPP_

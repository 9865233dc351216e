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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <vector>

#include "milab/dataset.hpp"

using namespace milab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("milab_test_tmp") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Pixel-space k-nearest-neighbor vote, the independent separability oracle.
double knn_pixel_accuracy(const ImageBatch& train, const ImageBatch& test, int k) {
  int correct = 0;
  const std::size_t dim = test.pixels_per_image();
  for (int t = 0; t < test.n; ++t) {
    std::vector<std::pair<double, std::uint32_t>> dists;
    dists.reserve(train.n);
    for (int s = 0; s < train.n; ++s) {
      double d2 = 0.0;
      const float* a = test.image(t);
      const float* b = train.image(s);
      for (std::size_t i = 0; i < dim; ++i) {
        const double diff = static_cast<double>(a[i]) - b[i];
        d2 += diff * diff;
      }
      dists.emplace_back(d2, train.labels[s]);
    }
    std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
    std::vector<int> votes(64, 0);
    for (int i = 0; i < k; ++i) ++votes[dists[i].second];
    const int winner = static_cast<int>(
        std::max_element(votes.begin(), votes.end()) - votes.begin());
    correct += winner == static_cast<int>(test.labels[t]);
  }
  return static_cast<double>(correct) / test.n;
}

// Holds out the last `holdout` samples of each identity block.
void split_by_identity(const ImageBatch& all, int samples_per_identity,
                       int holdout, ImageBatch& train, ImageBatch& test) {
  const int num_ids = all.n / samples_per_identity;
  const int train_per = samples_per_identity - holdout;
  train = ImageBatch(num_ids * train_per, all.c, all.h, all.w);
  test = ImageBatch(num_ids * holdout, all.c, all.h, all.w);
  const std::size_t dim = all.pixels_per_image();
  int tr = 0, te = 0;
  for (int i = 0; i < all.n; ++i) {
    const int within = i % samples_per_identity;
    ImageBatch& dst = within < train_per ? train : test;
    int& row = within < train_per ? tr : te;
    std::copy_n(all.image(i), dim, dst.image(row));
    dst.labels[row] = all.labels[i];
    ++row;
  }
}

}  // namespace

TEST_CASE("generation is bit-deterministic in the seed") {
  const DatasetBundle a = generate_synthfaces(4, 3, 24, 24, 3, 123);
  const DatasetBundle b = generate_synthfaces(4, 3, 24, 24, 3, 123);
  CHECK(a == b);
  const DatasetBundle c = generate_synthfaces(4, 3, 24, 24, 3, 124);
  CHECK_FALSE(a == c);
}

TEST_CASE("private and public identity sets are disjoint") {
  const DatasetBundle bundle = generate_synthfaces(8, 2, 16, 16, 3, 7);
  int shared = 0;
  for (auto id : bundle.public_split.identity_ids)
    for (auto other : bundle.private_split.identity_ids) shared += id == other;
  CHECK(shared == 0);
  CHECK_NOTHROW(validate_bundle(bundle));
}

TEST_CASE("pixels stay in [0,1] and labels cover the class range") {
  const DatasetBundle bundle = generate_synthfaces(6, 4, 16, 16, 1, 99);
  for (float v : bundle.private_split.images.data) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  std::vector<int> seen(6, 0);
  for (auto label : bundle.private_split.images.labels) ++seen[label];
  for (int count : seen) CHECK(count == 4);
}

TEST_CASE("default scale is separable: 3-NN pixel oracle above 0.9") {
  const DatasetBundle bundle = generate_synthfaces(32, 20, 32, 32, 3, 7);
  ImageBatch train, test;
  split_by_identity(bundle.private_split.images, 20, 5, train, test);
  const double acc = knn_pixel_accuracy(train, test, 3);
  INFO("3-NN pixel accuracy: ", acc);
  CHECK(acc > 0.9);
}

TEST_CASE("invalid generator arguments") {
  CHECK_THROWS_AS(generate_synthfaces(1, 5, 32, 32, 3, 1), ConfigError);
  CHECK_THROWS_AS(generate_synthfaces(4, 1, 32, 32, 3, 1), ConfigError);
  CHECK_THROWS_AS(generate_synthfaces(4, 5, 8, 32, 3, 1), ConfigError);
}

TEST_CASE("save/load round-trips bit-identically") {
  const fs::path dir = fresh_dir("roundtrip");
  const DatasetBundle bundle = generate_synthfaces(4, 3, 16, 16, 3, 55);
  save_dataset(bundle, dir.string());
  const DatasetBundle loaded = load_dataset(dir.string());
  CHECK(loaded == bundle);

  // format arithmetic: images.bin holds N*C*H*W float32
  const auto bytes = fs::file_size(dir / "private" / "images.bin");
  CHECK(bytes == 12u * 3u * 16u * 16u * 4u);

  std::ifstream meta_in(dir / "private" / "meta.json");
  nlohmann::json meta;
  meta_in >> meta;
  CHECK(meta["seed"].get<std::uint64_t>() == 55);
  CHECK(meta["num_identities"].get<int>() == 4);
  CHECK(meta["samples_per_identity"].get<int>() == 3);
  CHECK(meta["width"].get<int>() == 16);
  CHECK(meta["role"].get<std::string>() == "private");
  CHECK(meta["format_version"].get<int>() == 1);
}

TEST_CASE("truncated images.bin reports expected vs actual byte counts") {
  const fs::path dir = fresh_dir("truncated");
  save_dataset(generate_synthfaces(4, 3, 16, 16, 3, 55), dir.string());
  fs::resize_file(dir / "private" / "images.bin", 100);
  try {
    load_dataset(dir.string());
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string what = e.what();
    CHECK(what.find(std::to_string(12 * 3 * 16 * 16 * 4)) != std::string::npos);
    CHECK(what.find("100") != std::string::npos);
  }
}

TEST_CASE("out-of-range label is an invariant violation") {
  const fs::path dir = fresh_dir("badlabel");
  const DatasetBundle bundle = generate_synthfaces(4, 3, 16, 16, 3, 55);
  save_dataset(bundle, dir.string());
  std::vector<std::uint32_t> labels = bundle.private_split.images.labels;
  labels[0] = 4;  // == num_identities
  std::ofstream out(dir / "private" / "labels.bin", std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size() * sizeof(std::uint32_t)));
  out.close();
  CHECK_THROWS_AS(load_dataset(dir.string()), InvariantError);
}

TEST_CASE("missing files are format errors") {
  const fs::path dir = fresh_dir("missing");
  save_dataset(generate_synthfaces(4, 3, 16, 16, 3, 55), dir.string());
  fs::remove(dir / "public" / "labels.bin");
  CHECK_THROWS_AS(load_dataset(dir.string()), FormatError);
}

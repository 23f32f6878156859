// SPDX-License-Identifier: Apache-2.0
//
// Procedural "textured patch" images: each class is an oriented grating under
// random frequency, phase, colour, a weaker distractor grating and pixel noise.
#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "teenas/nn/tensor.hpp"

namespace teenas::nn {

struct DataRecipe {
  std::string id = "textured-patch-v1";
  int resolution = 16;
  int channels = 3;
  int num_classes = 8;
  double noise_sd = 0.35;
  double distractor_amplitude = 0.5;
  double orientation_jitter = 0.06;  // radians
};

nlohmann::json to_json(const DataRecipe& recipe);
DataRecipe data_recipe_from_json(const nlohmann::json& doc);

enum class Split { Public, Train, Val, Test, Auxiliary };
const char* split_name(Split s);

struct SyntheticDataset {
  DataRecipe recipe;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  Tensor inputs;            // [N, R, R, C]
  std::vector<int> labels;  // class indices

  [[nodiscard]] int size() const { return static_cast<int>(labels.size()); }
  /// Rows `idx` as a [n, R, R, C] batch.
  [[nodiscard]] Tensor batch(std::span<const int> idx) const;
  [[nodiscard]] std::vector<int> batch_labels(std::span<const int> idx) const;
  /// First `count` samples (the generator already interleaves classes).
  [[nodiscard]] SyntheticDataset head(int count) const;
};

/// Class-balanced within one sample; bit-identical for equal (recipe, split, count, seed).
SyntheticDataset make_dataset(const DataRecipe& recipe, Split split, int count, std::uint64_t seed);

struct DataSizes {
  int public_count = 800;
  int train = 4000;
  int val = 800;
  int test = 800;
  int auxiliary = 800;
};

/// Every split from one root seed with disjoint per-split generator streams.
struct DataBundle {
  SyntheticDataset public_split, train, val, test, auxiliary;
};
DataBundle make_data_bundle(const DataRecipe& recipe, const DataSizes& sizes, std::uint64_t seed);

}  // namespace teenas::nn

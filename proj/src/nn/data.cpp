// SPDX-License-Identifier: Apache-2.0
#include "teenas/nn/data.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "teenas/json_util.hpp"
#include "teenas/rng.hpp"

namespace teenas::nn {

namespace ju = json_util;
using nlohmann::json;

json to_json(const DataRecipe& r) {
  return json{{"id", r.id},
              {"resolution", r.resolution},
              {"channels", r.channels},
              {"num_classes", r.num_classes},
              {"noise_sd", r.noise_sd},
              {"distractor_amplitude", r.distractor_amplitude},
              {"orientation_jitter", r.orientation_jitter}};
}

DataRecipe data_recipe_from_json(const json& doc) {
  constexpr std::string_view ctx = "data recipe";
  ju::check_keys(doc, {"id", "resolution", "channels", "num_classes", "noise_sd", "distractor_amplitude",
                       "orientation_jitter"},
                 ctx);
  DataRecipe r;
  r.id = ju::optional<std::string>(doc, "id", r.id, ctx);
  r.resolution = ju::optional<int>(doc, "resolution", r.resolution, ctx);
  r.channels = ju::optional<int>(doc, "channels", r.channels, ctx);
  r.num_classes = ju::optional<int>(doc, "num_classes", r.num_classes, ctx);
  r.noise_sd = ju::optional<double>(doc, "noise_sd", r.noise_sd, ctx);
  r.distractor_amplitude = ju::optional<double>(doc, "distractor_amplitude", r.distractor_amplitude, ctx);
  r.orientation_jitter = ju::optional<double>(doc, "orientation_jitter", r.orientation_jitter, ctx);
  if (r.resolution < 4 || r.channels < 1 || r.num_classes < 2 || r.noise_sd < 0.0) {
    throw ParseError("data recipe: out-of-range field");
  }
  return r;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Public: return "public";
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Auxiliary: return "auxiliary";
  }
  return "?";
}

Tensor SyntheticDataset::batch(std::span<const int> idx) const {
  const int R = recipe.resolution, C = recipe.channels;
  const std::size_t per = static_cast<std::size_t>(R) * R * C;
  Tensor out({static_cast<int>(idx.size()), R, R, C});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = inputs.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(idx[i]) * per);
    std::copy(src, src + static_cast<std::ptrdiff_t>(per), out.data.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

std::vector<int> SyntheticDataset::batch_labels(std::span<const int> idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(labels.at(static_cast<std::size_t>(i)));
  return out;
}

SyntheticDataset SyntheticDataset::head(int count) const {
  if (count < 0 || count > size()) throw std::invalid_argument("dataset head: count out of range");
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
  SyntheticDataset out{recipe, split, seed, batch(idx), batch_labels(idx)};
  return out;
}

SyntheticDataset make_dataset(const DataRecipe& recipe, Split split, int count, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("make_dataset: negative count");
  const int R = recipe.resolution, C = recipe.channels, K = recipe.num_classes;
  SyntheticDataset ds;
  ds.recipe = recipe;
  ds.split = split;
  ds.seed = seed;
  ds.inputs = Tensor({count, R, R, C});
  ds.labels.resize(static_cast<std::size_t>(count));
  Rng rng = make_rng(seed, 0xda7a0000ull + static_cast<std::uint64_t>(split));
  constexpr double pi = std::numbers::pi;
  std::vector<double> color(static_cast<std::size_t>(C)), dcolor(static_cast<std::size_t>(C));
  for (int i = 0; i < count; ++i) {
    const int label = i % K;
    ds.labels[static_cast<std::size_t>(i)] = label;
    const double theta = pi * label / K + recipe.orientation_jitter * standard_normal(rng);
    const double freq = 0.12 + 0.18 * uniform01(rng);
    const double phase = 2.0 * pi * uniform01(rng);
    const double dtheta = pi * uniform01(rng);
    const double dfreq = 0.12 + 0.18 * uniform01(rng);
    const double dphase = 2.0 * pi * uniform01(rng);
    for (auto& c : color) c = 0.3 + 0.7 * uniform01(rng);
    for (auto& c : dcolor) c = 0.3 + 0.7 * uniform01(rng);
    const double ct = std::cos(theta), st = std::sin(theta), cd = std::cos(dtheta), sd = std::sin(dtheta);
    double* px = ds.inputs.data.data() + static_cast<std::size_t>(i) * R * R * C;
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x) {
        const double u = std::cos(2.0 * pi * freq * (x * ct + y * st) + phase);
        const double v = std::cos(2.0 * pi * dfreq * (x * cd + y * sd) + dphase);
        for (int c = 0; c < C; ++c) {
          *px++ = color[static_cast<std::size_t>(c)] * u +
                  recipe.distractor_amplitude * dcolor[static_cast<std::size_t>(c)] * v +
                  recipe.noise_sd * standard_normal(rng);
        }
      }
  }
  return ds;
}

DataBundle make_data_bundle(const DataRecipe& recipe, const DataSizes& sizes, std::uint64_t seed) {
  DataBundle b;
  b.public_split = make_dataset(recipe, Split::Public, sizes.public_count, derive_seed(seed, 1));
  b.train = make_dataset(recipe, Split::Train, sizes.train, derive_seed(seed, 2));
  b.val = make_dataset(recipe, Split::Val, sizes.val, derive_seed(seed, 3));
  b.test = make_dataset(recipe, Split::Test, sizes.test, derive_seed(seed, 4));
  b.auxiliary = make_dataset(recipe, Split::Auxiliary, sizes.auxiliary, derive_seed(seed, 5));
  return b;
}

}  // namespace teenas::nn

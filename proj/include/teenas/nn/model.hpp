// SPDX-License-Identifier: Apache-2.0
//
// Backbone (REE trunk + REE head), TEE sub-network and TEE classifier.
//
// Sub-network block k taps backbone block k: the feature is bilinearly
// resampled to spatial_down x spatial_down by the adapter, average-pooled to
// channel_down channels, mixed, then projected up to (spatial_up^2, channel_up)
// by W^u = (U_s over positions, U_c over channels). Block outputs are summed,
// globally averaged and fed to the TEE classifier.
//
//   spatial mixing: H = silu(W[sh, Pd] X + b[sh]) ; Y = U_s[Pu, sh] H U_c[cd, cu]
//   channel mixing: H = silu(X W[cd, ch] + b[ch]) ; Y = U_s[Pu, Pd] H U_c[ch, cu]
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "teenas/nn/ops.hpp"
#include "teenas/nn/tensor.hpp"
#include "teenas/search_space.hpp"

namespace teenas::nn {

struct BackboneArch {
  struct Block {
    int out_channels = 8;
    bool pool = false;  // 2x2 average pool after the convolution
  };
  int input_resolution = 16;
  int input_channels = 3;
  int num_classes = 8;
  std::vector<Block> blocks{{8, true}, {8, false}, {16, true}, {16, false}, {32, true}, {32, false}};

  [[nodiscard]] BackboneDims dims() const;
  void check() const;
};

nlohmann::json to_json(const BackboneArch& arch);
BackboneArch backbone_arch_from_json(const nlohmann::json& doc);

struct ParamGroup {
  std::vector<Parameter> params;
  bool frozen = false;

  [[nodiscard]] const Parameter* find(const std::string& name) const;
  [[nodiscard]] const Parameter& at(const std::string& name) const;
  Parameter& at(const std::string& name);
  [[nodiscard]] std::int64_t count() const;
  void zero_grad() const;
};

struct ModelState {
  BackboneArch arch;
  ParamGroup backbone;        // "trunk.<l>.w|b", "head.w|b"
  ParamGroup subnet;          // "subnet.<k>.mix_w|mix_b|up_s|up_c", k 1-based
  ParamGroup tee_classifier;  // "tee.w|b"
  std::optional<Configuration> config;

  [[nodiscard]] bool has_subnetwork() const { return config.has_value(); }
  /// Parameters of the TEE side (sub-network + classifier).
  [[nodiscard]] std::int64_t tee_parameter_count() const { return subnet.count() + tee_classifier.count(); }
  /// Rounds every parameter to single precision, the checkpoint storage format.
  void round_to_storage();
};

/// Deterministic initialization; the REE head starts small but non-zero.
ModelState build_backbone(const BackboneArch& arch, std::uint64_t seed);

/// Adds a freshly initialized sub-network + TEE classifier for `config`.
/// Throws std::invalid_argument for a configuration that does not fit the backbone.
void build_subnetwork(ModelState& model, const Configuration& config, std::uint64_t seed);

/// Bilinear resampling of [N, R, R, C] to [N, target, target, C]; identity (bit-exact) when target == R.
Tensor adapter_forward(const Tensor& feature, int target_resolution);

struct ForwardIds {
  Id backbone_logits = -1;
  Id combined_logits = -1;  // equals backbone_logits when K = 0
  std::vector<Id> taps;     // per backbone block, [N, P, C]
};

/// Records one forward pass. Frozen groups (and everything, when
/// track_gradients is false) enter the graph as constants.
ForwardIds forward_graph(Graph& g, const ModelState& model, Id x, bool track_gradients = true);
/// Sub-network path on given taps: returns TEE logits [N, classes].
Id subnet_forward(Graph& g, const ModelState& model, const std::vector<Id>& taps, bool track_gradients = true);

/// Backbone-head logits M_b(x), in fixed-size chunks.
Tensor forward_backbone(const ModelState& model, const Tensor& x);
/// Combined-model logits M_c(x); the backbone head when K = 0.
Tensor forward_combined(const ModelState& model, const Tensor& x);
/// Block outputs of the trunk for a batch, each [N, P, C].
std::vector<Tensor> backbone_taps(const ModelState& model, const Tensor& x);

double accuracy(const Tensor& logits, std::span<const int> labels);

}  // namespace teenas::nn

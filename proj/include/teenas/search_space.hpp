// SPDX-License-Identifier: Apache-2.0
//
// TEE sub-network search space: configurations, their validity against the
// admissible factor ranges, the [0,1]^D encoding used by the surrogate, random
// sampling, and the secure-memory footprint that gates feasibility.
#pragma once

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "teenas/rng.hpp"

namespace teenas {

enum class OpType : int { Inactive = 0, SpatialMixing = 1, ChannelMixing = 2 };

struct SearchFactorRanges {
  std::vector<int> su_choices{4, 8, 16};
  std::vector<int> cu_choices{16, 32, 64};
  std::vector<int> type_choices{0, 1, 2};
  std::vector<int> sd_choices{2, 4, 8};
  std::vector<int> cd_choices{2, 4, 8};
  std::vector<int> sh_choices{8, 16, 32, 64};
  std::vector<int> ch_choices{8, 16, 32, 64};
  int num_blocks = 6;

  /// Throws std::invalid_argument naming the first offending list.
  void check() const;
  /// Encoded dimension D = 2 + 5 * num_blocks.
  [[nodiscard]] std::size_t encoded_dim() const { return 2 + 5 * static_cast<std::size_t>(num_blocks); }
};

struct BlockSpec {
  OpType op_type = OpType::Inactive;
  int spatial_down = 0;
  int channel_down = 0;
  int spatial_hidden = 0;
  int channel_hidden = 0;

  [[nodiscard]] bool active() const { return op_type != OpType::Inactive; }
};

/// Dimension fields of inactive blocks carry no meaning, so equality ignores them.
bool operator==(const BlockSpec& a, const BlockSpec& b);

struct Configuration {
  int spatial_up = 0;
  int channel_up = 0;
  std::vector<BlockSpec> blocks;

  /// K: number of active blocks (transfer points).
  [[nodiscard]] int active_count() const;
  /// p_1 < ... < p_K, 1-based backbone block indices of the active blocks.
  [[nodiscard]] std::vector<int> transfer_points() const;
  /// Inactive blocks rewritten with zeroed dims; stable key for dedup/hashing.
  [[nodiscard]] Configuration canonical() const;
  [[nodiscard]] std::string key() const;

  friend bool operator==(const Configuration&, const Configuration&) = default;
};

/// Result of validate(): empty violation means OK.
struct Validity {
  std::string violation;
  [[nodiscard]] bool ok() const { return violation.empty(); }
  explicit operator bool() const { return ok(); }
};

Validity validate(const Configuration& config, const SearchFactorRanges& ranges);

std::vector<double> encode(const Configuration& config, const SearchFactorRanges& ranges);
Configuration decode(std::span<const double> x, const SearchFactorRanges& ranges);

Configuration sample_random(const SearchFactorRanges& ranges, Rng& rng);
Configuration sample_random(const SearchFactorRanges& ranges, std::uint64_t seed);

/// The configuration with every block inactive and minimal global factors.
Configuration empty_configuration(const SearchFactorRanges& ranges);

// --- backbone geometry and memory ----------------------------------------

/// Output geometry of one backbone block: square resolution x channels.
struct BlockDims {
  int resolution = 0;
  int channels = 0;
};

struct BackboneDims {
  std::vector<BlockDims> blocks;
  int num_classes = 0;
};

struct MemoryFootprint {
  std::uint64_t parameter_bytes = 0;
  std::uint64_t peak_activation_bytes = 0;
  std::uint64_t total = 0;
};

inline constexpr std::uint64_t kBytesPerElement = 4;

/// Learnable weights of one active block (mixing weights + bias, both W^u factors).
std::int64_t block_weight_count(const BlockSpec& block, int spatial_up, int channel_up);
/// TEE classifier: C^u x classes weights plus class biases.
std::int64_t classifier_weight_count(int channel_up, int num_classes);
std::int64_t subnetwork_weight_count(const Configuration& config, int num_classes);
/// Elements alive while one active block runs: input + hidden + output.
std::int64_t block_activation_count(const BlockSpec& block, const BlockDims& io, int spatial_up,
                                    int channel_up);

MemoryFootprint estimate_memory(const Configuration& config, const BackboneDims& dims);

// --- serialization ---------------------------------------------------------

nlohmann::json to_json(const SearchFactorRanges& ranges);
SearchFactorRanges ranges_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Configuration& config);
Configuration configuration_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const BackboneDims& dims);
BackboneDims backbone_dims_from_json(const nlohmann::json& doc);

}  // namespace teenas

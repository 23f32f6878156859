// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary model container:
//   "TNCK" | u32 version | u32 header bytes | header JSON |
//   u32 array count | per array: u8 group, u32 name bytes, name,
//                     u32 rank, u32 dims..., little-endian float32 values
// The header carries the recipe id, configuration hash, seeds and the
// backbone architecture.
#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "teenas/nn/model.hpp"

namespace teenas::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string recipe;
  std::string config_hash;  // SHA-256 of the configuration JSON; empty without a sub-network
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
};

std::string configuration_hash(const Configuration& config);

std::string serialize_checkpoint(const ModelState& model, const CheckpointMeta& meta);
void save_checkpoint(const std::filesystem::path& path, const ModelState& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  ModelState model;
  CheckpointMeta meta;
};

/// Throws ParseError on a malformed or truncated container.
LoadedCheckpoint deserialize_checkpoint(const std::string& bytes);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// SHA-256 over names, shapes and float32 values of a group.
std::string group_checksum(const ParamGroup& group);

}  // namespace teenas::nn

// SPDX-License-Identifier: Apache-2.0
//
// Parallel REE(GPU)/TEE(CPU) inference latency. The closed form sums, per
// handshake interval, the slower of the TEE chain (transfer + sub-network
// block) and the GPU segment up to the next transfer point. simulate_schedule
// replays the same execution as an explicit task schedule and serves as its
// oracle.
#pragma once

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "teenas/search_space.hpp"

namespace teenas {

struct CostProfile {
  std::vector<double> gpu_block_ms;  // c^G_l, l = 1..L
  std::vector<double> adapter_ms;    // c^A_i, adapter after backbone block i
  double transfer_base_ms = 0.0;
  double transfer_bandwidth_bytes_per_ms = 1.0;
  double tee_ms_per_mac = 0.0;       // c^C = tee_ms_per_mac * MACs + tee_block_overhead_ms
  double tee_block_overhead_ms = 0.0;
  double classifier_ms = 0.0;        // TEE classifier, appended after the last interval
  double cpu_slowdown = 1.0;         // sequential baseline: CPU time per unit of GPU time

  [[nodiscard]] std::size_t num_blocks() const { return gpu_block_ms.size(); }
  [[nodiscard]] double backbone_ms() const;
  /// Throws std::invalid_argument on negative durations, non-positive bandwidth or length mismatch.
  void check() const;
};

enum class Resource { Gpu, Cpu, Link };
const char* resource_name(Resource r);

struct ScheduleEvent {
  Resource resource = Resource::Gpu;
  std::string label;
  double start_ms = 0.0;
  double end_ms = 0.0;
};

struct ScheduleTrace {
  std::vector<ScheduleEvent> events;
  double makespan_ms = 0.0;

  /// "resource,label,start,end" with a header row.
  [[nodiscard]] std::string to_csv() const;
};

/// Dense multiply-accumulates of an active block; average pooling is free.
std::int64_t block_mac_count(const BlockSpec& block, int spatial_up, int channel_up);

/// c^C(a_k). Throws std::invalid_argument for an inactive block.
double tee_block_cost(const BlockSpec& block, int spatial_up, int channel_up, const CostProfile& profile);

/// c^T(a_k) for the 1-based backbone block index k; the payload is the adapter
/// output (S^d_k x S^d_k x C_k, 4 bytes per element).
double transfer_cost(int block_index, const Configuration& config, const BackboneDims& dims,
                     const CostProfile& profile);

/// g(a), closed form.
double parallel_latency(const Configuration& config, const CostProfile& profile, const BackboneDims& dims);

ScheduleTrace simulate_schedule(const Configuration& config, const CostProfile& profile, const BackboneDims& dims);

/// Layer-wise partitioning: blocks 1..split on the GPU, the rest inside the TEE
/// at cpu_slowdown times their GPU cost, one feature transfer in between.
double sequential_baseline_latency(int split_layer, const CostProfile& profile, const BackboneDims& dims);

/// Upper bound on g(a) over the whole search space: 2 * sum c^G plus every
/// block's worst-case TEE chain, all adapters and the classifier.
double latency_ceiling(const SearchFactorRanges& ranges, const CostProfile& profile, const BackboneDims& dims);

nlohmann::json to_json(const CostProfile& profile);
CostProfile cost_profile_from_json(const nlohmann::json& doc);

}  // namespace teenas

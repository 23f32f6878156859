// SPDX-License-Identifier: Apache-2.0
#include "teenas/latency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "teenas/json_util.hpp"

namespace teenas {
namespace {

void check_structure(const Configuration& config, const CostProfile& profile, const BackboneDims& dims) {
  profile.check();
  if (config.blocks.size() != profile.num_blocks() || dims.blocks.size() != profile.num_blocks()) {
    throw std::invalid_argument("latency: configuration, profile and io_dims disagree on the block count");
  }
  if (config.spatial_up <= 0 || config.channel_up <= 0) {
    throw std::invalid_argument("latency: global up-sampling factors must be positive");
  }
  for (const auto& b : config.blocks) {
    if (b.active() && (b.spatial_down <= 0 || b.channel_down <= 0 || b.spatial_hidden <= 0 || b.channel_hidden <= 0)) {
      throw std::invalid_argument("latency: active block with non-positive dimension");
    }
  }
}

double gpu_sum(const CostProfile& p, int first, int last) {  // 1-based inclusive
  double s = 0.0;
  for (int l = first; l <= last; ++l) s += p.gpu_block_ms[static_cast<std::size_t>(l - 1)];
  return s;
}

}  // namespace

double CostProfile::backbone_ms() const { return std::accumulate(gpu_block_ms.begin(), gpu_block_ms.end(), 0.0); }

void CostProfile::check() const {
  if (gpu_block_ms.empty()) throw std::invalid_argument("cost profile: gpu_block_ms is empty");
  if (adapter_ms.size() != gpu_block_ms.size()) {
    throw std::invalid_argument("cost profile: adapter_ms and gpu_block_ms lengths differ");
  }
  auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!std::all_of(gpu_block_ms.begin(), gpu_block_ms.end(), nonneg)) {
    throw std::invalid_argument("cost profile: gpu_block_ms must be >= 0");
  }
  if (!std::all_of(adapter_ms.begin(), adapter_ms.end(), nonneg)) {
    throw std::invalid_argument("cost profile: adapter_ms must be >= 0");
  }
  if (!nonneg(transfer_base_ms)) throw std::invalid_argument("cost profile: transfer_base_ms must be >= 0");
  if (!(transfer_bandwidth_bytes_per_ms > 0.0)) {
    throw std::invalid_argument("cost profile: transfer_bandwidth_bytes_per_ms must be > 0");
  }
  if (!nonneg(tee_ms_per_mac)) throw std::invalid_argument("cost profile: tee_ms_per_mac must be >= 0");
  if (!nonneg(tee_block_overhead_ms)) throw std::invalid_argument("cost profile: tee_block_overhead_ms must be >= 0");
  if (!nonneg(classifier_ms)) throw std::invalid_argument("cost profile: classifier_ms must be >= 0");
  if (!nonneg(cpu_slowdown)) throw std::invalid_argument("cost profile: cpu_slowdown must be >= 0");
}

const char* resource_name(Resource r) {
  switch (r) {
    case Resource::Gpu: return "GPU";
    case Resource::Cpu: return "CPU";
    case Resource::Link: return "LINK";
  }
  return "?";
}

std::string ScheduleTrace::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "resource,label,start,end\n";
  for (const auto& e : events) {
    os << resource_name(e.resource) << ',' << e.label << ',' << e.start_ms << ',' << e.end_ms << '\n';
  }
  return os.str();
}

// Spatial mixing: W (S^h x P_d) per pooled channel, then U_s (P_u x S^h), then U_c (C^d -> C^u).
// Channel mixing: W (C^d -> C^h) per position, then U_c (C^h -> C^u), then U_s (P_u x P_d).
std::int64_t block_mac_count(const BlockSpec& b, int spatial_up, int channel_up) {
  const std::int64_t pd = static_cast<std::int64_t>(b.spatial_down) * b.spatial_down;
  const std::int64_t pu = static_cast<std::int64_t>(spatial_up) * spatial_up;
  switch (b.op_type) {
    case OpType::SpatialMixing:
      return b.spatial_hidden * pd * b.channel_down + pu * b.spatial_hidden * b.channel_down +
             pu * b.channel_down * channel_up;
    case OpType::ChannelMixing:
      return pd * b.channel_down * b.channel_hidden + pd * b.channel_hidden * channel_up + pu * pd * channel_up;
    case OpType::Inactive:
      break;
  }
  return 0;
}

double tee_block_cost(const BlockSpec& block, int spatial_up, int channel_up, const CostProfile& profile) {
  if (!block.active()) throw std::invalid_argument("tee_block_cost: block is inactive");
  return profile.tee_ms_per_mac * static_cast<double>(block_mac_count(block, spatial_up, channel_up)) +
         profile.tee_block_overhead_ms;
}

double transfer_cost(int block_index, const Configuration& config, const BackboneDims& dims,
                     const CostProfile& profile) {
  if (block_index < 1 || block_index > static_cast<int>(config.blocks.size()) ||
      block_index > static_cast<int>(dims.blocks.size())) {
    throw std::invalid_argument("transfer_cost: block index out of range");
  }
  const auto& b = config.blocks[static_cast<std::size_t>(block_index - 1)];
  if (!b.active()) throw std::invalid_argument("transfer_cost: block is inactive");
  const double elements = static_cast<double>(b.spatial_down) * b.spatial_down *
                          dims.blocks[static_cast<std::size_t>(block_index - 1)].channels;
  return profile.transfer_base_ms +
         static_cast<double>(kBytesPerElement) * elements / profile.transfer_bandwidth_bytes_per_ms;
}

double parallel_latency(const Configuration& config, const CostProfile& profile, const BackboneDims& dims) {
  check_structure(config, profile, dims);
  const int L = static_cast<int>(profile.num_blocks());
  const auto p = config.transfer_points();
  const int K = static_cast<int>(p.size());
  if (K == 0) return gpu_sum(profile, 1, L);

  auto tee_chain = [&](int k) {  // k is 0-based into p
    const auto& b = config.blocks[static_cast<std::size_t>(p[static_cast<std::size_t>(k)] - 1)];
    return transfer_cost(p[static_cast<std::size_t>(k)], config, dims, profile) +
           tee_block_cost(b, config.spatial_up, config.channel_up, profile);
  };
  auto adapter = [&](int block) { return profile.adapter_ms[static_cast<std::size_t>(block - 1)]; };

  double g = gpu_sum(profile, 1, p[0]) + adapter(p[0]);
  for (int k = 0; k + 1 < K; ++k) {
    const int from = p[static_cast<std::size_t>(k)];
    const int to = p[static_cast<std::size_t>(k + 1)];
    g += std::max(tee_chain(k), gpu_sum(profile, from + 1, to) + adapter(to));
  }
  g += std::max(tee_chain(K - 1), gpu_sum(profile, p.back() + 1, L));
  return g + profile.classifier_ms;
}

namespace {

// Tasks are issued per resource in program order; a task starts once its
// resource is free and all of its dependencies have finished.
class Simulator {
 public:
  int add(Resource r, std::string label, double duration, std::initializer_list<int> deps) {
    double start = free_at_[static_cast<int>(r)];
    for (int d : deps) {
      if (d >= 0) start = std::max(start, trace_.events[static_cast<std::size_t>(d)].end_ms);
    }
    const double end = start + duration;
    free_at_[static_cast<int>(r)] = end;
    trace_.events.push_back({r, std::move(label), start, end});
    trace_.makespan_ms = std::max(trace_.makespan_ms, end);
    return static_cast<int>(trace_.events.size()) - 1;
  }

  ScheduleTrace finish() && { return std::move(trace_); }

 private:
  double free_at_[3] = {0.0, 0.0, 0.0};
  ScheduleTrace trace_;
};

}  // namespace

ScheduleTrace simulate_schedule(const Configuration& config, const CostProfile& profile, const BackboneDims& dims) {
  check_structure(config, profile, dims);
  const int L = static_cast<int>(profile.num_blocks());
  Simulator sim;
  int gpu_prev = -1;
  int cpu_prev = -1;  // last finished sub-network block: the handshake partner
  int handshake = -1; // sub-network block the GPU must wait for after the current transfer point
  std::size_t k = 0;
  int last_gpu = -1;
  for (int l = 1; l <= L; ++l) {
    const auto& spec = config.blocks[static_cast<std::size_t>(l - 1)];
    gpu_prev = sim.add(Resource::Gpu, "backbone_" + std::to_string(l),
                       profile.gpu_block_ms[static_cast<std::size_t>(l - 1)], {gpu_prev, handshake});
    handshake = -1;
    last_gpu = gpu_prev;
    if (!spec.active()) continue;
    ++k;
    const int adapter = sim.add(Resource::Gpu, "adapter_" + std::to_string(l),
                                profile.adapter_ms[static_cast<std::size_t>(l - 1)], {gpu_prev});
    gpu_prev = adapter;
    // Handshake: the transfer and the next GPU segment both wait for the TEE
    // to finish the previous sub-network block.
    const int link = sim.add(Resource::Link, "transfer_" + std::to_string(k),
                             transfer_cost(l, config, dims, profile), {adapter, cpu_prev});
    handshake = cpu_prev;
    cpu_prev = sim.add(Resource::Cpu, "subnet_" + std::to_string(k),
                       tee_block_cost(spec, config.spatial_up, config.channel_up, profile), {link});
    last_gpu = adapter;
  }
  if (k > 0) sim.add(Resource::Cpu, "classifier", profile.classifier_ms, {cpu_prev, last_gpu});
  return std::move(sim).finish();
}

double sequential_baseline_latency(int split_layer, const CostProfile& profile, const BackboneDims& dims) {
  profile.check();
  const int L = static_cast<int>(profile.num_blocks());
  if (split_layer < 0 || split_layer > L) throw std::invalid_argument("sequential_baseline_latency: split out of range");
  if (dims.blocks.size() != profile.num_blocks()) {
    throw std::invalid_argument("sequential_baseline_latency: io_dims and profile disagree on the block count");
  }
  double transfer = 0.0;
  if (split_layer > 0 && split_layer < L) {
    const auto& io = dims.blocks[static_cast<std::size_t>(split_layer - 1)];
    const double elements = static_cast<double>(io.resolution) * io.resolution * io.channels;
    transfer = profile.transfer_base_ms +
               static_cast<double>(kBytesPerElement) * elements / profile.transfer_bandwidth_bytes_per_ms;
  }
  return gpu_sum(profile, 1, split_layer) + transfer + profile.cpu_slowdown * gpu_sum(profile, split_layer + 1, L);
}

double latency_ceiling(const SearchFactorRanges& ranges, const CostProfile& profile, const BackboneDims& dims) {
  profile.check();
  const int L = static_cast<int>(profile.num_blocks());
  if (ranges.num_blocks != L || static_cast<int>(dims.blocks.size()) != L) {
    throw std::invalid_argument("latency_ceiling: block counts disagree");
  }
  const int su = ranges.su_choices.back();
  const int cu = ranges.cu_choices.back();
  const int sd = ranges.sd_choices.back();
  double worst_tee = 0.0;
  for (int l = 0; l < L; ++l) {
    double worst = 0.0;
    for (int t : ranges.type_choices) {
      if (t == 0) continue;
      BlockSpec b{static_cast<OpType>(t), sd, ranges.cd_choices.back(), ranges.sh_choices.back(),
                  ranges.ch_choices.back()};
      const double transfer = profile.transfer_base_ms + static_cast<double>(kBytesPerElement) * sd * sd *
                                                             dims.blocks[static_cast<std::size_t>(l)].channels /
                                                             profile.transfer_bandwidth_bytes_per_ms;
      worst = std::max(worst, transfer + tee_block_cost(b, su, cu, profile));
    }
    worst_tee += worst + profile.adapter_ms[static_cast<std::size_t>(l)];
  }
  return 2.0 * profile.backbone_ms() + worst_tee + profile.classifier_ms;
}

// --- serialization ---------------------------------------------------------

using nlohmann::json;
namespace ju = json_util;

json to_json(const CostProfile& p) {
  json doc = ju::schema_header("teenas.cost-profile", 1);
  doc["gpu_block_ms"] = p.gpu_block_ms;
  doc["adapter_ms"] = p.adapter_ms;
  doc["transfer_base_ms"] = p.transfer_base_ms;
  doc["transfer_bandwidth_bytes_per_ms"] = p.transfer_bandwidth_bytes_per_ms;
  doc["tee_ms_per_mac"] = p.tee_ms_per_mac;
  doc["tee_block_overhead_ms"] = p.tee_block_overhead_ms;
  doc["classifier_ms"] = p.classifier_ms;
  doc["cpu_slowdown"] = p.cpu_slowdown;
  return doc;
}

CostProfile cost_profile_from_json(const json& doc) {
  constexpr std::string_view ctx = "cost profile";
  ju::check_schema(doc, "teenas.cost-profile", 1);
  ju::check_keys(doc, {"schema", "version", "gpu_block_ms", "adapter_ms", "transfer_base_ms",
                       "transfer_bandwidth_bytes_per_ms", "tee_ms_per_mac", "tee_block_overhead_ms", "classifier_ms",
                       "cpu_slowdown"},
                 ctx);
  CostProfile p;
  p.gpu_block_ms = ju::require<std::vector<double>>(doc, "gpu_block_ms", ctx);
  p.adapter_ms = ju::require<std::vector<double>>(doc, "adapter_ms", ctx);
  p.transfer_base_ms = ju::require<double>(doc, "transfer_base_ms", ctx);
  p.transfer_bandwidth_bytes_per_ms = ju::require<double>(doc, "transfer_bandwidth_bytes_per_ms", ctx);
  p.tee_ms_per_mac = ju::require<double>(doc, "tee_ms_per_mac", ctx);
  p.tee_block_overhead_ms = ju::require<double>(doc, "tee_block_overhead_ms", ctx);
  p.classifier_ms = ju::optional<double>(doc, "classifier_ms", 0.0, ctx);
  p.cpu_slowdown = ju::optional<double>(doc, "cpu_slowdown", 1.0, ctx);
  try {
    p.check();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  return p;
}

}  // namespace teenas

// SPDX-License-Identifier: Apache-2.0
#include "teenas/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "teenas/json_util.hpp"

namespace teenas {
namespace {

bool contains(const std::vector<int>& list, int v) {
  return std::find(list.begin(), list.end(), v) != list.end();
}

std::size_t index_of(const std::vector<int>& list, int v, const char* field) {
  const auto it = std::find(list.begin(), list.end(), v);
  if (it == list.end()) throw std::invalid_argument(std::string("encode: value not admissible for ") + field);
  return static_cast<std::size_t>(it - list.begin());
}

double coordinate(std::size_t index, std::size_t n) {
  return n <= 1 ? 0.0 : static_cast<double>(index) / static_cast<double>(n - 1);
}

// Round half up onto the choice grid, clamped to the list bounds.
int snap(double x, const std::vector<int>& list) {
  const auto n = static_cast<long>(list.size());
  if (n <= 1 || !std::isfinite(x)) return list.front();
  long idx = static_cast<long>(std::floor(x * static_cast<double>(n - 1) + 0.5));
  idx = std::clamp(idx, 0L, n - 1);
  return list[static_cast<std::size_t>(idx)];
}

int draw(const std::vector<int>& list, Rng& rng) { return list[uniform_index(rng, list.size())]; }

void check_list(const std::vector<int>& list, const char* name) {
  if (list.empty()) throw std::invalid_argument(std::string("ranges: ") + name + " is empty");
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i] <= 0 && std::string_view(name) != "type_choices") {
      throw std::invalid_argument(std::string("ranges: ") + name + " must be positive");
    }
    if (i > 0 && list[i] <= list[i - 1]) {
      throw std::invalid_argument(std::string("ranges: ") + name + " must be strictly increasing");
    }
  }
}

}  // namespace

void SearchFactorRanges::check() const {
  check_list(su_choices, "su_choices");
  check_list(cu_choices, "cu_choices");
  check_list(type_choices, "type_choices");
  for (int t : type_choices) {
    if (t < 0 || t > 2) throw std::invalid_argument("ranges: type_choices must be a subset of {0,1,2}");
  }
  check_list(sd_choices, "sd_choices");
  check_list(cd_choices, "cd_choices");
  check_list(sh_choices, "sh_choices");
  check_list(ch_choices, "ch_choices");
  if (num_blocks < 1) throw std::invalid_argument("ranges: num_blocks must be >= 1");
}

bool operator==(const BlockSpec& a, const BlockSpec& b) {
  if (a.op_type != b.op_type) return false;
  if (!a.active()) return true;
  return a.spatial_down == b.spatial_down && a.channel_down == b.channel_down &&
         a.spatial_hidden == b.spatial_hidden && a.channel_hidden == b.channel_hidden;
}

int Configuration::active_count() const {
  return static_cast<int>(std::count_if(blocks.begin(), blocks.end(), [](const BlockSpec& b) { return b.active(); }));
}

std::vector<int> Configuration::transfer_points() const {
  std::vector<int> points;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (blocks[k].active()) points.push_back(static_cast<int>(k) + 1);
  }
  return points;
}

Configuration Configuration::canonical() const {
  Configuration c = *this;
  for (auto& b : c.blocks) {
    if (!b.active()) b = BlockSpec{};
  }
  return c;
}

std::string Configuration::key() const {
  std::ostringstream os;
  os << spatial_up << ',' << channel_up;
  for (const auto& b : blocks) {
    os << '|' << static_cast<int>(b.op_type);
    if (b.active()) os << ':' << b.spatial_down << ':' << b.channel_down << ':' << b.spatial_hidden << ':' << b.channel_hidden;
  }
  return os.str();
}

Validity validate(const Configuration& config, const SearchFactorRanges& ranges) {
  if (!contains(ranges.su_choices, config.spatial_up)) return {"spatial_up"};
  if (!contains(ranges.cu_choices, config.channel_up)) return {"channel_up"};
  if (static_cast<int>(config.blocks.size()) != ranges.num_blocks) return {"block count"};
  for (const auto& b : config.blocks) {
    if (!contains(ranges.type_choices, static_cast<int>(b.op_type))) return {"op_type"};
    if (!b.active()) continue;
    if (!contains(ranges.sd_choices, b.spatial_down)) return {"spatial_down"};
    if (!contains(ranges.cd_choices, b.channel_down)) return {"channel_down"};
    if (!contains(ranges.sh_choices, b.spatial_hidden)) return {"spatial_hidden"};
    if (!contains(ranges.ch_choices, b.channel_hidden)) return {"channel_hidden"};
  }
  return {};
}

std::vector<double> encode(const Configuration& config, const SearchFactorRanges& ranges) {
  if (const auto v = validate(config, ranges); !v) {
    throw std::invalid_argument("encode: invalid configuration (" + v.violation + ")");
  }
  std::vector<double> x;
  x.reserve(ranges.encoded_dim());
  x.push_back(coordinate(index_of(ranges.su_choices, config.spatial_up, "spatial_up"), ranges.su_choices.size()));
  x.push_back(coordinate(index_of(ranges.cu_choices, config.channel_up, "channel_up"), ranges.cu_choices.size()));
  for (const auto& b : config.blocks) {
    x.push_back(coordinate(index_of(ranges.type_choices, static_cast<int>(b.op_type), "op_type"),
                           ranges.type_choices.size()));
    if (!b.active()) {
      // Ignored fields encode at their list minimum.
      x.insert(x.end(), 4, 0.0);
      continue;
    }
    x.push_back(coordinate(index_of(ranges.sd_choices, b.spatial_down, "spatial_down"), ranges.sd_choices.size()));
    x.push_back(coordinate(index_of(ranges.cd_choices, b.channel_down, "channel_down"), ranges.cd_choices.size()));
    x.push_back(coordinate(index_of(ranges.sh_choices, b.spatial_hidden, "spatial_hidden"), ranges.sh_choices.size()));
    x.push_back(coordinate(index_of(ranges.ch_choices, b.channel_hidden, "channel_hidden"), ranges.ch_choices.size()));
  }
  return x;
}

Configuration decode(std::span<const double> x, const SearchFactorRanges& ranges) {
  if (x.size() != ranges.encoded_dim()) {
    throw std::invalid_argument("decode: expected dimension " + std::to_string(ranges.encoded_dim()) + ", got " +
                                std::to_string(x.size()));
  }
  Configuration c;
  c.spatial_up = snap(x[0], ranges.su_choices);
  c.channel_up = snap(x[1], ranges.cu_choices);
  c.blocks.resize(static_cast<std::size_t>(ranges.num_blocks));
  for (int k = 0; k < ranges.num_blocks; ++k) {
    const std::size_t o = 2 + 5 * static_cast<std::size_t>(k);
    BlockSpec& b = c.blocks[static_cast<std::size_t>(k)];
    b.op_type = static_cast<OpType>(snap(x[o], ranges.type_choices));
    if (!b.active()) continue;
    b.spatial_down = snap(x[o + 1], ranges.sd_choices);
    b.channel_down = snap(x[o + 2], ranges.cd_choices);
    b.spatial_hidden = snap(x[o + 3], ranges.sh_choices);
    b.channel_hidden = snap(x[o + 4], ranges.ch_choices);
  }
  return c;
}

Configuration sample_random(const SearchFactorRanges& ranges, Rng& rng) {
  Configuration c;
  c.spatial_up = draw(ranges.su_choices, rng);
  c.channel_up = draw(ranges.cu_choices, rng);
  c.blocks.resize(static_cast<std::size_t>(ranges.num_blocks));
  for (auto& b : c.blocks) {
    b.op_type = static_cast<OpType>(draw(ranges.type_choices, rng));
    b.spatial_down = draw(ranges.sd_choices, rng);
    b.channel_down = draw(ranges.cd_choices, rng);
    b.spatial_hidden = draw(ranges.sh_choices, rng);
    b.channel_hidden = draw(ranges.ch_choices, rng);
  }
  return c.canonical();
}

Configuration sample_random(const SearchFactorRanges& ranges, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return sample_random(ranges, rng);
}

Configuration empty_configuration(const SearchFactorRanges& ranges) {
  Configuration c;
  c.spatial_up = ranges.su_choices.front();
  c.channel_up = ranges.cu_choices.front();
  c.blocks.resize(static_cast<std::size_t>(ranges.num_blocks));
  return c;
}

// Block layout (P_d = S^d^2 pooled positions, P_u = S^u^2 output positions):
//   spatial mixing: W[S^h x P_d] + b[S^h], up-projection U_s[P_u x S^h], U_c[C^d x C^u]
//   channel mixing: W[C^d x C^h] + b[C^h], up-projection U_c[C^h x C^u], U_s[P_u x P_d]
std::int64_t block_weight_count(const BlockSpec& b, int spatial_up, int channel_up) {
  const std::int64_t pd = static_cast<std::int64_t>(b.spatial_down) * b.spatial_down;
  const std::int64_t pu = static_cast<std::int64_t>(spatial_up) * spatial_up;
  switch (b.op_type) {
    case OpType::SpatialMixing:
      return b.spatial_hidden * pd + b.spatial_hidden + pu * b.spatial_hidden +
             static_cast<std::int64_t>(b.channel_down) * channel_up;
    case OpType::ChannelMixing:
      return static_cast<std::int64_t>(b.channel_down) * b.channel_hidden + b.channel_hidden +
             static_cast<std::int64_t>(b.channel_hidden) * channel_up + pu * pd;
    case OpType::Inactive:
      break;
  }
  return 0;
}

std::int64_t classifier_weight_count(int channel_up, int num_classes) {
  return static_cast<std::int64_t>(channel_up) * num_classes + num_classes;
}

std::int64_t subnetwork_weight_count(const Configuration& config, int num_classes) {
  std::int64_t total = classifier_weight_count(config.channel_up, num_classes);
  for (const auto& b : config.blocks) total += block_weight_count(b, config.spatial_up, config.channel_up);
  return total;
}

std::int64_t block_activation_count(const BlockSpec& b, const BlockDims& io, int spatial_up, int channel_up) {
  if (!b.active()) return 0;
  const std::int64_t pd = static_cast<std::int64_t>(b.spatial_down) * b.spatial_down;
  const std::int64_t pu = static_cast<std::int64_t>(spatial_up) * spatial_up;
  const std::int64_t input = pd * io.channels;
  const std::int64_t hidden = b.op_type == OpType::SpatialMixing
                                  ? static_cast<std::int64_t>(b.spatial_hidden) * b.channel_down
                                  : pd * b.channel_hidden;
  return input + hidden + pu * channel_up;
}

MemoryFootprint estimate_memory(const Configuration& config, const BackboneDims& dims) {
  if (dims.blocks.size() != config.blocks.size()) {
    throw std::invalid_argument("estimate_memory: io_dims has " + std::to_string(dims.blocks.size()) +
                                " blocks, configuration has " + std::to_string(config.blocks.size()));
  }
  MemoryFootprint m;
  m.parameter_bytes = kBytesPerElement * static_cast<std::uint64_t>(subnetwork_weight_count(config, dims.num_classes));
  std::int64_t peak = 0;
  for (std::size_t k = 0; k < config.blocks.size(); ++k) {
    peak = std::max(peak, block_activation_count(config.blocks[k], dims.blocks[k], config.spatial_up, config.channel_up));
  }
  m.peak_activation_bytes = kBytesPerElement * static_cast<std::uint64_t>(peak);
  m.total = m.parameter_bytes + m.peak_activation_bytes;
  return m;
}

// --- serialization ---------------------------------------------------------

using nlohmann::json;
namespace ju = json_util;

json to_json(const SearchFactorRanges& r) {
  json doc = ju::schema_header("teenas.ranges", 1);
  doc["su_choices"] = r.su_choices;
  doc["cu_choices"] = r.cu_choices;
  doc["type_choices"] = r.type_choices;
  doc["sd_choices"] = r.sd_choices;
  doc["cd_choices"] = r.cd_choices;
  doc["sh_choices"] = r.sh_choices;
  doc["ch_choices"] = r.ch_choices;
  doc["num_blocks"] = r.num_blocks;
  return doc;
}

SearchFactorRanges ranges_from_json(const json& doc) {
  constexpr std::string_view ctx = "ranges";
  ju::check_schema(doc, "teenas.ranges", 1);
  ju::check_keys(doc, {"schema", "version", "su_choices", "cu_choices", "type_choices", "sd_choices", "cd_choices",
                       "sh_choices", "ch_choices", "num_blocks"},
                 ctx);
  SearchFactorRanges r;
  r.su_choices = ju::require<std::vector<int>>(doc, "su_choices", ctx);
  r.cu_choices = ju::require<std::vector<int>>(doc, "cu_choices", ctx);
  r.type_choices = ju::require<std::vector<int>>(doc, "type_choices", ctx);
  r.sd_choices = ju::require<std::vector<int>>(doc, "sd_choices", ctx);
  r.cd_choices = ju::require<std::vector<int>>(doc, "cd_choices", ctx);
  r.sh_choices = ju::require<std::vector<int>>(doc, "sh_choices", ctx);
  r.ch_choices = ju::require<std::vector<int>>(doc, "ch_choices", ctx);
  r.num_blocks = ju::require<int>(doc, "num_blocks", ctx);
  try {
    r.check();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  return r;
}

json to_json(const Configuration& c) {
  json blocks = json::array();
  for (const auto& b : c.blocks) {
    json jb{{"type", static_cast<int>(b.op_type)}};
    if (b.active()) {
      jb["spatial_down"] = b.spatial_down;
      jb["channel_down"] = b.channel_down;
      jb["spatial_hidden"] = b.spatial_hidden;
      jb["channel_hidden"] = b.channel_hidden;
    }
    blocks.push_back(std::move(jb));
  }
  return json{{"spatial_up", c.spatial_up}, {"channel_up", c.channel_up}, {"blocks", std::move(blocks)}};
}

Configuration configuration_from_json(const json& doc) {
  constexpr std::string_view ctx = "configuration";
  if (doc.contains("schema")) ju::check_schema(doc, "teenas.configuration", 1);
  ju::check_keys(doc, {"schema", "version", "spatial_up", "channel_up", "blocks"}, ctx);
  Configuration c;
  c.spatial_up = ju::require<int>(doc, "spatial_up", ctx);
  c.channel_up = ju::require<int>(doc, "channel_up", ctx);
  const auto& blocks = doc.at("blocks");
  if (!blocks.is_array()) throw ParseError("configuration: 'blocks' must be a list");
  for (const auto& jb : blocks) {
    ju::check_keys(jb, {"type", "spatial_down", "channel_down", "spatial_hidden", "channel_hidden"}, "block");
    BlockSpec b;
    const int t = ju::require<int>(jb, "type", "block");
    if (t < 0 || t > 2) throw ParseError("block: type must be 0, 1 or 2");
    b.op_type = static_cast<OpType>(t);
    if (b.active()) {
      b.spatial_down = ju::require<int>(jb, "spatial_down", "block");
      b.channel_down = ju::require<int>(jb, "channel_down", "block");
      b.spatial_hidden = ju::require<int>(jb, "spatial_hidden", "block");
      b.channel_hidden = ju::require<int>(jb, "channel_hidden", "block");
    }
    c.blocks.push_back(b);
  }
  return c;
}

json to_json(const BackboneDims& dims) {
  json blocks = json::array();
  for (const auto& b : dims.blocks) blocks.push_back({{"resolution", b.resolution}, {"channels", b.channels}});
  return json{{"blocks", std::move(blocks)}, {"num_classes", dims.num_classes}};
}

BackboneDims backbone_dims_from_json(const json& doc) {
  ju::check_keys(doc, {"blocks", "num_classes"}, "io_dims");
  BackboneDims dims;
  dims.num_classes = ju::require<int>(doc, "num_classes", "io_dims");
  for (const auto& jb : doc.at("blocks")) {
    ju::check_keys(jb, {"resolution", "channels"}, "io_dims block");
    dims.blocks.push_back({ju::require<int>(jb, "resolution", "io_dims block"),
                           ju::require<int>(jb, "channels", "io_dims block")});
  }
  return dims;
}

}  // namespace teenas

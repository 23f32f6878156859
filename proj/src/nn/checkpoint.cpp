// SPDX-License-Identifier: Apache-2.0
#include "teenas/nn/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "teenas/digest.hpp"
#include "teenas/error.hpp"

namespace teenas::nn {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'N', 'C', 'K'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

void put_bytes(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& b) : bytes_(b) {}
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint8_t u8() {
    need(1, "u8");
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw ParseError("checkpoint: truncated while reading " + std::string(what) + " at byte " + std::to_string(pos_));
    }
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void append_group(std::string& out, const ParamGroup& g, std::uint8_t id) {
  for (const auto& p : g.params) {
    out.push_back(static_cast<char>(id));
    put_bytes(out, p.name);
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (int d : p.value.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p.value.data) put_f32(out, v);
  }
}

}  // namespace

std::string configuration_hash(const Configuration& config) { return sha256_hex(to_json(config.canonical()).dump()); }

std::string serialize_checkpoint(const ModelState& model, const CheckpointMeta& meta) {
  json header{{"recipe", meta.recipe},
              {"config_hash", meta.config_hash},
              {"seeds", meta.seeds},
              {"extra", meta.extra},
              {"arch", to_json(model.arch)},
              {"frozen", {model.backbone.frozen, model.subnet.frozen, model.tee_classifier.frozen}}};
  if (model.config) header["config"] = to_json(*model.config);
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_bytes(out, header.dump());
  put_u32(out, static_cast<std::uint32_t>(model.backbone.params.size() + model.subnet.params.size() +
                                          model.tee_classifier.params.size()));
  append_group(out, model.backbone, 0);
  append_group(out, model.subnet, 1);
  append_group(out, model.tee_classifier, 2);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& model, const CheckpointMeta& meta) {
  write_text_file(path, serialize_checkpoint(model, meta));
}

LoadedCheckpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != std::string(kMagic, 4)) throw ParseError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t hlen = r.u32();
  json header;
  try {
    header = json::parse(r.bytes(hlen, "header"));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  LoadedCheckpoint out;
  out.meta.recipe = header.value("recipe", "");
  out.meta.config_hash = header.value("config_hash", "");
  out.meta.seeds = header.value("seeds", json::object());
  out.meta.extra = header.value("extra", json::object());
  out.model.arch = backbone_arch_from_json(header.at("arch"));
  if (header.contains("config")) out.model.config = configuration_from_json(header.at("config"));
  const auto frozen = header.value("frozen", std::vector<bool>{false, false, false});
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint8_t group = r.u8();
    if (group > 2) throw ParseError("checkpoint: unknown parameter group " + std::to_string(group));
    Parameter p;
    p.name = r.bytes(r.u32(), "name");
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw ParseError("checkpoint: implausible rank for " + p.name);
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
    p.value = Tensor(shape);
    for (auto& v : p.value.data) v = static_cast<double>(r.f32());
    ParamGroup& g = group == 0 ? out.model.backbone : group == 1 ? out.model.subnet : out.model.tee_classifier;
    g.params.push_back(std::move(p));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes");
  if (frozen.size() == 3) {
    out.model.backbone.frozen = frozen[0];
    out.model.subnet.frozen = frozen[1];
    out.model.tee_classifier.frozen = frozen[2];
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_text_file(path)); }

std::string group_checksum(const ParamGroup& group) {
  std::string buf;
  append_group(buf, group, 0);
  return sha256_hex(buf);
}

}  // namespace teenas::nn

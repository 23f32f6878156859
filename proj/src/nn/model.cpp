// SPDX-License-Identifier: Apache-2.0
#include "teenas/nn/model.hpp"

#include <cmath>
#include <stdexcept>

#include "teenas/json_util.hpp"
#include "teenas/rng.hpp"

namespace teenas::nn {

namespace ju = json_util;
using nlohmann::json;

BackboneDims BackboneArch::dims() const {
  BackboneDims d;
  d.num_classes = num_classes;
  int res = input_resolution;
  for (const auto& b : blocks) {
    if (b.pool) res /= 2;
    d.blocks.push_back({res, b.out_channels});
  }
  return d;
}

void BackboneArch::check() const {
  if (input_resolution < 1 || input_channels < 1 || num_classes < 2 || blocks.empty()) {
    throw std::invalid_argument("backbone arch: non-positive size");
  }
  int res = input_resolution;
  for (const auto& b : blocks) {
    if (b.out_channels < 1) throw std::invalid_argument("backbone arch: block channels must be positive");
    if (b.pool) {
      if (res % 2 != 0) throw std::invalid_argument("backbone arch: pooling an odd resolution");
      res /= 2;
    }
  }
}

json to_json(const BackboneArch& a) {
  json blocks = json::array();
  for (const auto& b : a.blocks) blocks.push_back({{"out_channels", b.out_channels}, {"pool", b.pool}});
  return json{{"input_resolution", a.input_resolution},
              {"input_channels", a.input_channels},
              {"num_classes", a.num_classes},
              {"blocks", blocks}};
}

BackboneArch backbone_arch_from_json(const json& doc) {
  constexpr std::string_view ctx = "backbone arch";
  ju::check_keys(doc, {"input_resolution", "input_channels", "num_classes", "blocks"}, ctx);
  BackboneArch a;
  a.input_resolution = ju::optional<int>(doc, "input_resolution", a.input_resolution, ctx);
  a.input_channels = ju::optional<int>(doc, "input_channels", a.input_channels, ctx);
  a.num_classes = ju::optional<int>(doc, "num_classes", a.num_classes, ctx);
  if (doc.contains("blocks")) {
    a.blocks.clear();
    for (const auto& b : doc.at("blocks")) {
      ju::check_keys(b, {"out_channels", "pool"}, "backbone arch block");
      a.blocks.push_back({ju::require<int>(b, "out_channels", ctx), ju::optional<bool>(b, "pool", false, ctx)});
    }
  }
  try {
    a.check();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  return a;
}

// --- parameters ---------------------------------------------------------------

const Parameter* ParamGroup::find(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter& ParamGroup::at(const std::string& name) const {
  const Parameter* p = find(name);
  if (!p) throw std::invalid_argument("unknown parameter " + name);
  return *p;
}

Parameter& ParamGroup::at(const std::string& name) {
  return const_cast<Parameter&>(static_cast<const ParamGroup&>(*this).at(name));
}

std::int64_t ParamGroup::count() const {
  std::int64_t n = 0;
  for (const auto& p : params) n += static_cast<std::int64_t>(p.value.size());
  return n;
}

void ParamGroup::zero_grad() const {
  for (const auto& p : params) p.zero_grad();
}

void ModelState::round_to_storage() {
  for (ParamGroup* g : {&backbone, &subnet, &tee_classifier}) {
    for (auto& p : g->params) {
      for (auto& v : p.value.data) v = static_cast<double>(static_cast<float>(v));
    }
  }
}

namespace {

// Keeps unit pre-activation variance through silu (E[silu(z)^2] ~ 0.355 for z ~ N(0,1)).
constexpr double kSiluGain = 1.68;

Parameter make_param(std::string name, std::vector<int> shape, double sd, Rng& rng) {
  Parameter p{std::move(name), Tensor(std::move(shape)), Tensor()};
  if (sd > 0.0) {
    for (auto& v : p.value.data) v = sd * standard_normal(rng);
  }
  return p;
}

std::string block_name(int k, const char* field) { return "subnet." + std::to_string(k) + "." + field; }

Id bind_param(Graph& g, const ParamGroup& group, const std::string& name, bool track) {
  const Parameter& p = group.at(name);
  return (track && !group.frozen) ? g.param(p) : g.constant(p.value);
}

}  // namespace

ModelState build_backbone(const BackboneArch& arch, std::uint64_t seed) {
  arch.check();
  ModelState m;
  m.arch = arch;
  Rng rng = make_rng(seed, 0xb0b0);
  int cin = arch.input_channels;
  for (std::size_t l = 0; l < arch.blocks.size(); ++l) {
    const int cout = arch.blocks[l].out_channels;
    const std::string base = "trunk." + std::to_string(l + 1);
    m.backbone.params.push_back(make_param(base + ".w", {9 * cin, cout}, kSiluGain / std::sqrt(9.0 * cin), rng));
    m.backbone.params.push_back(make_param(base + ".b", {cout}, 0.0, rng));
    cin = cout;
  }
  m.backbone.params.push_back(make_param("head.w", {cin, arch.num_classes}, 0.1 / std::sqrt(cin), rng));
  m.backbone.params.push_back(make_param("head.b", {arch.num_classes}, 0.0, rng));
  return m;
}

void build_subnetwork(ModelState& model, const Configuration& config, std::uint64_t seed) {
  const BackboneDims dims = model.arch.dims();
  if (config.blocks.size() != dims.blocks.size()) {
    throw std::invalid_argument("build_subnetwork: configuration has " + std::to_string(config.blocks.size()) +
                                " blocks, backbone has " + std::to_string(dims.blocks.size()));
  }
  if (config.spatial_up < 1 || config.channel_up < 1) throw std::invalid_argument("build_subnetwork: non-positive up factors");
  Rng rng = make_rng(seed, 0x5b5b);
  const int su = config.spatial_up, cu = config.channel_up, pu = su * su;
  model.subnet = ParamGroup{};
  model.tee_classifier = ParamGroup{};
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const BlockSpec& b = config.blocks[i];
    if (!b.active()) continue;
    if (b.spatial_down < 1 || b.channel_down < 1 || (b.op_type == OpType::SpatialMixing && b.spatial_hidden < 1) ||
        (b.op_type == OpType::ChannelMixing && b.channel_hidden < 1)) {
      throw std::invalid_argument("build_subnetwork: active block " + std::to_string(i + 1) + " has non-positive dims");
    }
    const int k = static_cast<int>(i) + 1;
    const int pd = b.spatial_down * b.spatial_down, cd = b.channel_down;
    if (b.op_type == OpType::SpatialMixing) {
      const int sh = b.spatial_hidden;
      model.subnet.params.push_back(make_param(block_name(k, "mix_w"), {sh, pd}, kSiluGain / std::sqrt(pd), rng));
      model.subnet.params.push_back(make_param(block_name(k, "mix_b"), {sh}, 0.0, rng));
      model.subnet.params.push_back(make_param(block_name(k, "up_s"), {pu, sh}, std::sqrt(1.0 / sh), rng));
      model.subnet.params.push_back(make_param(block_name(k, "up_c"), {cd, cu}, std::sqrt(1.0 / cd), rng));
    } else {
      const int ch = b.channel_hidden;
      model.subnet.params.push_back(make_param(block_name(k, "mix_w"), {cd, ch}, kSiluGain / std::sqrt(cd), rng));
      model.subnet.params.push_back(make_param(block_name(k, "mix_b"), {ch}, 0.0, rng));
      model.subnet.params.push_back(make_param(block_name(k, "up_s"), {pu, pd}, std::sqrt(1.0 / pd), rng));
      model.subnet.params.push_back(make_param(block_name(k, "up_c"), {ch, cu}, std::sqrt(1.0 / ch), rng));
    }
  }
  const int classes = model.arch.num_classes;
  model.tee_classifier.params.push_back(make_param("tee.w", {cu, classes}, std::sqrt(1.0 / cu), rng));
  model.tee_classifier.params.push_back(make_param("tee.b", {classes}, 0.0, rng));
  model.config = config;
}

Tensor adapter_forward(const Tensor& feature, int target_resolution) {
  if (target_resolution < 1) throw std::invalid_argument("adapter_forward: target resolution must be positive");
  if (feature.rank() != 4 || feature.dim(1) != feature.dim(2)) {
    throw std::invalid_argument("adapter_forward: expects a square [N, R, R, C] feature");
  }
  const int N = feature.dim(0), R = feature.dim(1), C = feature.dim(3);
  if (R == target_resolution) return feature;
  Graph g;
  const Id x = g.constant(Tensor({N, R * R, C}, feature.data));
  const Id y = left_matmul(g, g.constant(bilinear_matrix(R, target_resolution)), x);
  return Tensor({N, target_resolution, target_resolution, C}, g.value(y).data);
}

Id subnet_forward(Graph& g, const ModelState& model, const std::vector<Id>& taps, bool track) {
  if (!model.config) throw std::invalid_argument("subnet_forward: model has no sub-network");
  const Configuration& config = *model.config;
  const BackboneDims dims = model.arch.dims();
  if (taps.size() != config.blocks.size()) throw std::invalid_argument("subnet_forward: tap count mismatch");
  const int cu = config.channel_up;
  Id aggregate = -1;
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const BlockSpec& b = config.blocks[i];
    if (!b.active()) continue;
    const int k = static_cast<int>(i) + 1;
    const int R = dims.blocks[i].resolution, C = dims.blocks[i].channels;
    const auto& ts = g.shape(taps[i]);
    if (ts.size() != 3 || ts[1] != R * R || ts[2] != C) throw std::invalid_argument("subnet_forward: tap shape mismatch");
    Id a = taps[i];
    if (b.spatial_down != R) a = left_matmul(g, g.constant(bilinear_matrix(R, b.spatial_down)), a);
    if (b.channel_down != C) a = linear_last(g, a, g.constant(channel_pool_matrix(C, b.channel_down)));
    const Id w = bind_param(g, model.subnet, block_name(k, "mix_w"), track);
    const Id bias = bind_param(g, model.subnet, block_name(k, "mix_b"), track);
    const Id us = bind_param(g, model.subnet, block_name(k, "up_s"), track);
    const Id uc = bind_param(g, model.subnet, block_name(k, "up_c"), track);
    Id y;
    if (b.op_type == OpType::SpatialMixing) {
      const Id h = silu(g, add_bias_mid(g, left_matmul(g, w, a), bias));
      y = linear_last(g, left_matmul(g, us, h), uc);
    } else {
      const Id h = silu(g, add_bias_last(g, linear_last(g, a, w), bias));
      y = left_matmul(g, us, linear_last(g, h, uc));
    }
    aggregate = aggregate < 0 ? y : add(g, aggregate, y);
  }
  const int N = g.shape(taps.front())[0];
  Id pooled;
  if (aggregate < 0) {
    pooled = g.constant(Tensor({N, cu}));
  } else {
    pooled = mean_mid(g, aggregate);
  }
  const Id tw = bind_param(g, model.tee_classifier, "tee.w", track);
  const Id tb = bind_param(g, model.tee_classifier, "tee.b", track);
  return add_bias_last(g, linear_last(g, pooled, tw), tb);
}

ForwardIds forward_graph(Graph& g, const ModelState& model, Id x, bool track) {
  const auto& xs = g.shape(x);
  const auto& arch = model.arch;
  if (xs.size() != 4 || xs[1] != arch.input_resolution || xs[2] != arch.input_resolution ||
      xs[3] != arch.input_channels) {
    throw std::invalid_argument("forward: input shape " + shape_string(xs) + " does not match the backbone");
  }
  ForwardIds out;
  Id h = x;
  for (std::size_t l = 0; l < arch.blocks.size(); ++l) {
    const std::string base = "trunk." + std::to_string(l + 1);
    h = silu(g, conv3x3(g, h, bind_param(g, model.backbone, base + ".w", track), bind_param(g, model.backbone, base + ".b", track)));
    if (arch.blocks[l].pool) h = avgpool2(g, h);
    const auto& s = g.shape(h);
    out.taps.push_back(reshape(g, h, {s[0], s[1] * s[2], s[3]}));
  }
  const Id pooled = mean_mid(g, out.taps.back());
  out.backbone_logits = add_bias_last(g, linear_last(g, pooled, bind_param(g, model.backbone, "head.w", track)),
                                      bind_param(g, model.backbone, "head.b", track));
  if (model.config && model.config->active_count() > 0) {
    out.combined_logits = subnet_forward(g, model, out.taps, track);
  } else {
    out.combined_logits = out.backbone_logits;
  }
  return out;
}

namespace {

constexpr int kChunk = 256;

template <typename F>
Tensor chunked(const Tensor& x, int classes, F&& f) {
  const int N = x.dim(0);
  const std::size_t per = x.size() / static_cast<std::size_t>(std::max(N, 1));
  Tensor out({N, classes});
  for (int s = 0; s < N; s += kChunk) {
    const int n = std::min(kChunk, N - s);
    std::vector<int> shape = x.shape;
    shape[0] = n;
    Tensor part(shape, std::vector<double>(x.data.begin() + static_cast<std::ptrdiff_t>(s * per),
                                           x.data.begin() + static_cast<std::ptrdiff_t>((s + n) * per)));
    const Tensor logits = f(part);
    std::copy(logits.data.begin(), logits.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(s) * classes);
  }
  return out;
}

}  // namespace

Tensor forward_backbone(const ModelState& model, const Tensor& x) {
  return chunked(x, model.arch.num_classes, [&](const Tensor& part) {
    Graph g;
    const ForwardIds ids = forward_graph(g, model, g.constant(part), false);
    return g.value(ids.backbone_logits);
  });
}

Tensor forward_combined(const ModelState& model, const Tensor& x) {
  return chunked(x, model.arch.num_classes, [&](const Tensor& part) {
    Graph g;
    const ForwardIds ids = forward_graph(g, model, g.constant(part), false);
    return g.value(ids.combined_logits);
  });
}

std::vector<Tensor> backbone_taps(const ModelState& model, const Tensor& x) {
  Graph g;
  const ForwardIds ids = forward_graph(g, model, g.constant(x), false);
  std::vector<Tensor> out;
  for (Id t : ids.taps) out.push_back(g.value(t));
  return out;
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  const auto pred = argmax_rows(logits);
  if (pred.size() != labels.size() || labels.empty()) throw std::invalid_argument("accuracy: size mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace teenas::nn

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "teenas/error.hpp"
#include "teenas/nn/checkpoint.hpp"
#include "teenas/nn/data.hpp"
#include "teenas/nn/model.hpp"
#include "teenas/nn/ops.hpp"
#include "teenas/nn/train.hpp"

using namespace teenas;
using namespace teenas::nn;

namespace {

BackboneArch tiny_arch() {
  BackboneArch a;
  a.input_resolution = 8;
  a.num_classes = 4;
  a.blocks = {{4, true}, {6, false}};
  return a;
}

Configuration tiny_config() {
  Configuration c;
  c.spatial_up = 2;
  c.channel_up = 5;
  c.blocks = {{OpType::SpatialMixing, 2, 3, 4, 0}, {OpType::ChannelMixing, 3, 2, 0, 4}};
  return c;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = sd * standard_normal(rng);
  return t;
}

std::vector<Parameter*> all_params(ModelState& m) {
  std::vector<Parameter*> out;
  for (ParamGroup* g : {&m.backbone, &m.subnet, &m.tee_classifier}) {
    for (auto& p : g->params) out.push_back(&p);
  }
  return out;
}

}  // namespace

TEST_CASE("adapter on a ramp: half-pixel bilinear averages 2x2 neighbourhoods") {
  Tensor ramp({1, 4, 4, 1});
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) ramp[static_cast<std::size_t>(4 * y + x)] = 4.0 * y + x;
  }
  const Tensor out = adapter_forward(ramp, 2);
  REQUIRE(out.shape == std::vector<int>{1, 2, 2, 1});
  // Output (0,0) samples input (0.5, 0.5): mean of 0, 1, 4, 5.
  CHECK(out[0] == doctest::Approx(2.5));
  CHECK(out[1] == doctest::Approx(4.5));
  CHECK(out[2] == doctest::Approx(10.5));
  CHECK(out[3] == doctest::Approx(12.5));
  const Tensor same = adapter_forward(ramp, 4);
  CHECK(same.data == ramp.data);
  const Tensor m = bilinear_matrix(4, 2);
  CHECK(m.shape == std::vector<int>{4, 16});
  for (int r = 0; r < 4; ++r) {
    double s = 0.0;
    for (int c = 0; c < 16; ++c) s += m[static_cast<std::size_t>(16 * r + c)];
    CHECK(s == doctest::Approx(1.0));
  }
}

TEST_CASE("channel pooling matrix averages contiguous bins") {
  const Tensor m = channel_pool_matrix(4, 2);
  REQUIRE(m.shape == std::vector<int>{4, 2});
  CHECK(m.data == std::vector<double>{0.5, 0.0, 0.5, 0.0, 0.0, 0.5, 0.0, 0.5});
}

TEST_CASE("distillation is non-negative and zero on identical logits") {
  Rng rng = make_rng(1);
  for (int t = 0; t < 20; ++t) {
    Graph g;
    const Tensor student = random_tensor({6, 5}, rng, 2.0);
    const Tensor teacher = random_tensor({6, 5}, rng, 2.0);
    const Id s = g.constant(student);
    CHECK(g.value(distillation_loss(g, s, teacher, 4.0))[0] >= 0.0);
    CHECK(std::abs(g.value(distillation_loss(g, s, student, 4.0))[0]) < 1e-12);
  }
}

TEST_CASE("gradient clipping caps the global norm") {
  Parameter a{"a", Tensor({2}, {0.0, 0.0}), Tensor({2}, {3.0, 0.0})};
  Parameter b{"b", Tensor({1}, {0.0}), Tensor({1}, {4.0})};
  const Parameter* ps[] = {&a, &b};
  CHECK(clip_gradients(ps, 10.0) == doctest::Approx(5.0));
  CHECK(a.grad[0] == 3.0);
  CHECK(clip_gradients(ps, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad[0] == doctest::Approx(0.6));
  CHECK(b.grad[0] == doctest::Approx(0.8));
}

TEST_CASE("sub-network parameter count equals the closed-form estimate") {
  ModelState m = build_backbone(tiny_arch(), 1);
  build_subnetwork(m, tiny_config(), 2);
  CHECK(m.tee_parameter_count() == subnetwork_weight_count(tiny_config(), 4));

  const SearchFactorRanges r;
  const BackboneArch arch;
  Rng rng = make_rng(9);
  for (int i = 0; i < 40; ++i) {
    const Configuration c = sample_random(r, rng);
    ModelState full = build_backbone(arch, 1);
    build_subnetwork(full, c, 3);
    CHECK(full.tee_parameter_count() == subnetwork_weight_count(c, arch.num_classes));
  }
}

TEST_CASE("joint-loss gradients match central differences") {
  Rng rng = make_rng(2);
  ModelState m = build_backbone(tiny_arch(), 3);
  build_subnetwork(m, tiny_config(), 4);
  const Tensor x = random_tensor({3, 8, 8, 3}, rng);
  const std::vector<int> labels{0, 3, 1};
  const Tensor teacher = random_tensor({3, 4}, rng);
  TrainConfig tc;
  tc.lambda = 0.3;
  for (Parameter* p : all_params(m)) p->zero_grad();
  total_poison_loss(m, x, labels, teacher, tc, true);

  double num2 = 0.0, den2 = 0.0;
  const double eps = 1e-5;
  for (Parameter* p : all_params(m)) {
    for (std::size_t i = 0; i < p->value.size(); i += 1 + p->value.size() / 7) {
      const double keep = p->value[i];
      p->value[i] = keep + eps;
      const double up = total_poison_loss(m, x, labels, teacher, tc, false).total;
      p->value[i] = keep - eps;
      const double dn = total_poison_loss(m, x, labels, teacher, tc, false).total;
      p->value[i] = keep;
      const double fd = (up - dn) / (2 * eps);
      num2 += std::pow(fd - p->grad[i], 2);
      den2 += fd * fd;
    }
  }
  REQUIRE(den2 > 0.0);
  CHECK(std::sqrt(num2 / den2) < 1e-6);
}

TEST_CASE("loss bookkeeping: total = beta*ce + (1-beta)*kd - lambda*adv") {
  Rng rng = make_rng(3);
  ModelState m = build_backbone(tiny_arch(), 5);
  build_subnetwork(m, tiny_config(), 6);
  const Tensor x = random_tensor({4, 8, 8, 3}, rng);
  const std::vector<int> labels{0, 1, 2, 3};
  const Tensor teacher = random_tensor({4, 4}, rng);
  for (double lambda : {0.0, 0.005, 0.5}) {
    TrainConfig tc;
    tc.lambda = lambda;
    tc.beta = 0.3;
    const LossParts p = total_poison_loss(m, x, labels, teacher, tc, false);
    CHECK(std::abs(p.total - (0.3 * p.ce + 0.7 * p.kd - lambda * p.adv_ce)) < 1e-6);
  }
}

TEST_CASE("without a sub-network the combined model is the backbone") {
  Rng rng = make_rng(4);
  const ModelState m = build_backbone(tiny_arch(), 7);
  const Tensor x = random_tensor({5, 8, 8, 3}, rng);
  CHECK(forward_combined(m, x).data == forward_backbone(m, x).data);
}

TEST_CASE("checkpoints round-trip at single precision") {
  ModelState m = build_backbone(tiny_arch(), 8);
  build_subnetwork(m, tiny_config(), 9);
  CheckpointMeta meta;
  meta.recipe = "textured-patch-v1";
  meta.config_hash = configuration_hash(tiny_config());
  meta.seeds = {{"init", 8}};
  const std::string bytes = serialize_checkpoint(m, meta);
  const LoadedCheckpoint back = deserialize_checkpoint(bytes);
  ModelState rounded = m;
  rounded.round_to_storage();
  CHECK(group_checksum(back.model.backbone) == group_checksum(rounded.backbone));
  CHECK(group_checksum(back.model.subnet) == group_checksum(rounded.subnet));
  CHECK(back.model.backbone.at("head.w").value.data == rounded.backbone.at("head.w").value.data);
  REQUIRE(back.model.config.has_value());
  CHECK(*back.model.config == tiny_config());
  CHECK(back.meta.recipe == meta.recipe);
  CHECK(back.meta.seeds == meta.seeds);
  CHECK(serialize_checkpoint(back.model, back.meta) == bytes);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
  CHECK_THROWS_AS(deserialize_checkpoint("XXXX" + bytes.substr(4)), ParseError);
}

TEST_CASE("epoch selection") {
  std::vector<EpochStats> c(4);
  const double combined[] = {0.80, 0.90, 0.89, 0.70};
  const double backbone[] = {0.60, 0.50, 0.30, 0.10};
  for (int i = 0; i < 4; ++i) {
    c[static_cast<std::size_t>(i)].epoch = i + 1;
    c[static_cast<std::size_t>(i)].combined_acc = combined[i];
    c[static_cast<std::size_t>(i)].backbone_acc = backbone[i];
  }
  CHECK(select_epoch(c, 0.0, 0.015) == 3);
  CHECK(select_epoch(c, 0.01, 0.015) == 2);
  CHECK(select_epoch(c, 0.01, 0.0) == 1);
  CHECK(select_epoch(c, 0.01, 1.0) == 3);
  c[2].backbone_acc = 0.5;
  CHECK(select_epoch(c, 0.01, 0.015) == 2);  // tie goes to the later epoch
  CHECK_THROWS_AS(select_epoch(std::vector<EpochStats>{}, 0.01, 0.0), std::invalid_argument);
}

TEST_CASE("datasets are deterministic and class balanced") {
  DataRecipe r;
  const SyntheticDataset a = make_dataset(r, Split::Train, 64, 5);
  const SyntheticDataset b = make_dataset(r, Split::Train, 64, 5);
  CHECK(a.inputs.data == b.inputs.data);
  CHECK(a.labels == b.labels);
  std::vector<int> counts(static_cast<std::size_t>(r.num_classes), 0);
  for (int l : a.labels) ++counts[static_cast<std::size_t>(l)];
  for (int n : counts) CHECK(n == 8);
  const SyntheticDataset v = make_dataset(r, Split::Val, 64, 5);
  CHECK(v.inputs.data != a.inputs.data);
}

TEST_CASE("poisoned training marks exactly one kept epoch and is reproducible") {
  DataRecipe recipe;
  recipe.resolution = 8;
  recipe.num_classes = 4;
  const SyntheticDataset train = make_dataset(recipe, Split::Train, 64, 1);
  const SyntheticDataset val = make_dataset(recipe, Split::Val, 32, 1);
  ModelState teacher = build_backbone(tiny_arch(), 10);
  FitConfig fc;
  fc.epochs = 2;
  fit_backbone(teacher, train, fc);
  TrainConfig tc;
  tc.lambda = 0.01;
  tc.epochs = 3;
  tc.batch_size = 16;
  tc.seed = 2;
  auto run = [&] {
    ModelState m = teacher;
    build_subnetwork(m, tiny_config(), 11);
    auto curves = train_poisoned(m, teacher, train, val, tc);
    return std::make_pair(m, curves);
  };
  const auto [m1, c1] = run();
  const auto [m2, c2] = run();
  REQUIRE(c1.size() == 3);
  int kept = 0;
  for (const auto& e : c1) kept += e.selected;
  CHECK(kept == 1);
  CHECK(c1[select_epoch(c1, tc.lambda, tc.selection_margin)].selected);
  CHECK(group_checksum(m1.backbone) == group_checksum(m2.backbone));
  CHECK(curves_to_csv(c1) == curves_to_csv(c2));
}

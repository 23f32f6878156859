// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "teenas/attack.hpp"
#include "teenas/nn/checkpoint.hpp"

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
  c.channel_up = 4;
  c.blocks = {{OpType::ChannelMixing, 2, 2, 0, 4}, {}};
  return c;
}

VictimBundle tiny_bundle() {
  VictimBundle b;
  b.public_backbone = build_backbone(tiny_arch(), 1);
  b.unprotected = build_backbone(tiny_arch(), 2);
  b.victim = build_backbone(tiny_arch(), 3);
  build_subnetwork(b.victim, tiny_config(), 4);
  return b;
}

DataRecipe tiny_recipe() {
  DataRecipe r;
  r.resolution = 8;
  r.num_classes = 4;
  return r;
}

}  // namespace

TEST_CASE("shadow initialization per exposure") {
  const VictimBundle b = tiny_bundle();
  const ModelState none = init_shadow(b, Exposure::NoShield);
  const ModelState black = init_shadow(b, Exposure::BlackBox);
  const ModelState poisoned = init_shadow(b, Exposure::PoisonedREE);
  CHECK(group_checksum(none.backbone) == group_checksum(b.unprotected.backbone));
  CHECK(group_checksum(black.backbone) == group_checksum(b.public_backbone.backbone));
  CHECK(group_checksum(poisoned.backbone) == group_checksum(b.victim.backbone));
  // Nothing from inside the TEE reaches any shadow.
  for (const ModelState* s : {&none, &black, &poisoned}) {
    CHECK_FALSE(s->has_subnetwork());
    CHECK(s->tee_parameter_count() == 0);
  }
}

TEST_CASE("architecture mismatch is rejected") {
  VictimBundle b = tiny_bundle();
  BackboneArch other = tiny_arch();
  other.blocks[1].out_channels = 8;
  b.public_backbone = build_backbone(other, 1);
  CHECK_THROWS_AS(init_shadow(b, Exposure::BlackBox), std::invalid_argument);
}

TEST_CASE("query budget and labels") {
  CHECK(query_count_for(0.01, 4000) == 40);
  CHECK(query_count_for(0.01, 250) == 3);
  const VictimBundle b = tiny_bundle();
  const SyntheticDataset pool = make_dataset(tiny_recipe(), Split::Auxiliary, 50, 1);
  const QuerySet q = query_victim(b.victim, pool, 12, 7);
  CHECK(q.labels.size() == 12);
  CHECK(q.labels == argmax_rows(forward_combined(b.victim, q.inputs)));
  CHECK(query_victim(b.victim, pool, 12, 7).inputs.data == q.inputs.data);
  CHECK(query_victim(b.victim, pool, 12, 8).inputs.data != q.inputs.data);
  CHECK_THROWS_AS(query_victim(b.victim, pool, 51, 7), std::invalid_argument);
  CHECK_THROWS_AS(query_victim(b.victim, pool, 0, 7), std::invalid_argument);
}

TEST_CASE("NoShield needs no training and matches the unprotected model") {
  const VictimBundle b = tiny_bundle();
  const SyntheticDataset aux = make_dataset(tiny_recipe(), Split::Auxiliary, 40, 1);
  const SyntheticDataset test = make_dataset(tiny_recipe(), Split::Test, 40, 1);
  const AttackData data{&aux, &test, 400};
  const AttackReport r = run_attack(b, {Exposure::NoShield, 0.01, 1}, data, AttackSettings{});
  CHECK(r.surrogate_accuracy == r.victim_accuracy);
  CHECK(r.query_count == 4);
}

TEST_CASE("suite rows are ordered and reproducible across worker counts") {
  const VictimBundle b = tiny_bundle();
  const SyntheticDataset aux = make_dataset(tiny_recipe(), Split::Auxiliary, 40, 1);
  const SyntheticDataset test = make_dataset(tiny_recipe(), Split::Test, 40, 1);
  const AttackData data{&aux, &test, 400};
  AttackSettings s;
  s.epochs = 2;
  s.batch_size = 4;
  const std::vector<Exposure> sc{Exposure::BlackBox, Exposure::PoisonedREE};
  const auto one = run_attack_suite(b, sc, {1, 2}, 0.02, data, s, 1);
  const auto two = run_attack_suite(b, sc, {1, 2}, 0.02, data, s, 2);
  REQUIRE(one.size() == 4);
  CHECK(one[0].scenario == Exposure::BlackBox);
  CHECK(one[1].seed == 2);
  CHECK(one[2].scenario == Exposure::PoisonedREE);
  CHECK(attack_reports_to_csv(one) == attack_reports_to_csv(two));
  const auto summary = summarize_attacks(one);
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].min <= summary[0].median);
  CHECK(summary[0].median <= summary[0].max);
}

TEST_CASE("median and names") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(exposure_from_name(exposure_name(Exposure::PoisonedREE)) == Exposure::PoisonedREE);
  CHECK_THROWS(exposure_from_name("Glassbox"));
}

// SPDX-License-Identifier: Apache-2.0
//
// Two-step model stealing: build a shadow from public plus REE-exposed
// weights, then fine-tune it on hard labels obtained by querying the victim.
// The attacker never touches sub-network or TEE-classifier parameters.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "teenas/nn/data.hpp"
#include "teenas/nn/model.hpp"
#include "teenas/nn/train.hpp"

namespace teenas {

enum class Exposure { NoShield, BlackBox, PoisonedREE };
const char* exposure_name(Exposure e);
Exposure exposure_from_name(const std::string& name);

struct AttackScenario {
  Exposure exposure = Exposure::BlackBox;
  double query_fraction = 0.01;
  std::uint64_t seed = 0;

  void check() const;
};

/// Defaults mirror the joint-training optimizer.
struct AttackSettings {
  int epochs = 20;
  double learning_rate = 0.03;
  double clip_threshold = 0.5;
  int batch_size = 64;
};

nlohmann::json to_json(const AttackSettings& s);
AttackSettings attack_settings_from_json(const nlohmann::json& doc);

struct AttackReport {
  Exposure scenario = Exposure::BlackBox;
  std::uint64_t seed = 0;
  int query_count = 0;
  double surrogate_accuracy = 0.0;
  double victim_accuracy = 0.0;
};

/// The models an attack run needs. `unprotected` is the victim's task model
/// without any TEE shielding (what NoShield exposes in full); `victim` is the
/// deployed partitioned model whose REE part is exposed.
struct VictimBundle {
  nn::ModelState public_backbone;
  nn::ModelState unprotected;
  nn::ModelState victim;
};

/// Backbone-only shadow model. Throws std::invalid_argument on an architecture mismatch.
nn::ModelState init_shadow(const VictimBundle& bundle, Exposure exposure);

struct QuerySet {
  nn::Tensor inputs;
  std::vector<int> labels;
};

int query_count_for(double query_fraction, int train_size);

/// Hard labels from the victim's full forward path on the first `count` pool
/// samples after a seeded shuffle. Throws std::invalid_argument if the pool is too small.
QuerySet query_victim(const nn::ModelState& victim, const nn::SyntheticDataset& pool, int count, std::uint64_t seed);

/// Fine-tunes every shadow parameter with CE on the queries; returns test accuracy.
double train_surrogate(nn::ModelState& shadow, const QuerySet& queries, const nn::SyntheticDataset& test,
                       const AttackSettings& settings, std::uint64_t seed);

struct AttackData {
  const nn::SyntheticDataset* auxiliary = nullptr;
  const nn::SyntheticDataset* test = nullptr;
  int train_size = 0;
};

/// NoShield copies the unprotected model and needs no training.
AttackReport run_attack(const VictimBundle& bundle, const AttackScenario& scenario, const AttackData& data,
                        const AttackSettings& settings);

/// Every scenario x seed, rows in (scenario, seed) order; runs concurrently over `workers`.
std::vector<AttackReport> run_attack_suite(const VictimBundle& bundle, const std::vector<Exposure>& scenarios,
                                           const std::vector<std::uint64_t>& seeds, double query_fraction,
                                           const AttackData& data, const AttackSettings& settings, int workers = 1);

std::string attack_reports_to_csv(const std::vector<AttackReport>& reports);

struct ScenarioSummary {
  Exposure scenario;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};
std::vector<ScenarioSummary> summarize_attacks(const std::vector<AttackReport>& reports);

double median(std::vector<double> v);

}  // namespace teenas

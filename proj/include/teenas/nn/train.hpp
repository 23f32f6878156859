// SPDX-License-Identifier: Apache-2.0
//
// Training loops. All of them use plain minibatch gradient descent with
// global-norm clipping and a fixed learning rate; shuffling is drawn from the
// run seed only.
#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "teenas/nn/data.hpp"
#include "teenas/nn/model.hpp"

namespace teenas::nn {

/// Joint objective: beta * CE(M_c) + (1 - beta) * KD(M_c, M_t) - lambda * CE(M_b).
struct TrainConfig {
  double beta = 0.5;
  double lambda = 0.0;
  double kd_temperature = 4.0;
  double learning_rate = 0.03;
  double clip_threshold = 0.5;
  int epochs = 30;
  int batch_size = 64;
  std::uint64_t seed = 0;
  /// With lambda > 0, epochs whose combined eval accuracy is within this many
  /// accuracy units of the best epoch are eligible for the kept checkpoint.
  double selection_margin = 0.015;

  void check() const;
};

nlohmann::json to_json(const TrainConfig& tc);
TrainConfig train_config_from_json(const nlohmann::json& doc);

/// Plain cross-entropy fitting of the backbone (public pre-training, teacher).
struct FitConfig {
  double learning_rate = 0.1;
  double clip_threshold = 2.0;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const FitConfig& fc);
FitConfig fit_config_from_json(const nlohmann::json& doc);

/// Scales gradients in place so their global L2 norm is at most `threshold`.
/// Returns the norm before clipping.
double clip_gradients(std::span<const Parameter* const> params, double threshold);

struct LossParts {
  double ce = 0.0;      // CE(M_c(x), y)
  double kd = 0.0;      // KD(M_c(x), M_t(x))
  double adv_ce = 0.0;  // CE(M_b(x), y)
  double total = 0.0;
};

/// Evaluates the joint objective on one batch. With `accumulate`, gradients are
/// added to every non-frozen parameter's grad buffer (zero them first).
LossParts total_poison_loss(const ModelState& model, const Tensor& x, std::span<const int> labels,
                            const Tensor& teacher_logits, const TrainConfig& tc, bool accumulate = true);

/// Trainable (non-frozen) parameters in a fixed order.
std::vector<const Parameter*> trainable_parameters(const ModelState& model);

/// Trains every non-frozen parameter of the backbone on plain CE. Returns final train-set loss.
double fit_backbone(ModelState& model, const SyntheticDataset& data, const FitConfig& fc);

/// One epoch on cached frozen-backbone features, sub-network + TEE classifier only, plain CE.
struct CandidateData {
  std::vector<Tensor> train_taps;  // per backbone block [N, P, C]
  std::vector<int> train_labels;
  std::vector<Tensor> val_taps;
  std::vector<int> val_labels;
  double fallback_accuracy = 0.0;  // backbone head on the validation split (K = 0)
};

CandidateData make_candidate_data(const ModelState& frozen_backbone, const SyntheticDataset& train,
                                  const SyntheticDataset& val);

struct CandidateTrainOptions {
  double learning_rate = 0.1;
  double clip_threshold = 2.0;
  int batch_size = 32;
  int epochs = 1;
};

/// Validation accuracy f(a). Throws TrainingDivergence on a non-finite loss.
double train_candidate(const Configuration& config, const ModelState& frozen_backbone, const CandidateData& data,
                       std::uint64_t seed, const CandidateTrainOptions& options = {});

struct EpochStats {
  int epoch = 0;
  double combined_acc = 0.0;
  double backbone_acc = 0.0;
  double ce = 0.0;
  double kd = 0.0;
  double adv_ce = 0.0;
  double total = 0.0;
  bool selected = false;
};

std::string curves_to_csv(std::span<const EpochStats> curves);

/// Index of the epoch to keep. lambda == 0 keeps the last epoch; otherwise the
/// lowest backbone accuracy among epochs whose combined accuracy is within
/// `margin` of the best, later epochs winning ties.
std::size_t select_epoch(std::span<const EpochStats> curves, double lambda, double margin);

/// Joint training of backbone + sub-network + TEE classifier against a frozen
/// teacher. Curves report accuracies on `eval` after each epoch; the model ends
/// at the epoch chosen by select_epoch (flagged in the curves). Three
/// consecutive non-finite steps throw TrainingDivergence; the model then holds
/// the last finite state.
std::vector<EpochStats> train_poisoned(ModelState& model, const ModelState& teacher, const SyntheticDataset& train,
                                       const SyntheticDataset& eval, const TrainConfig& tc);

}  // namespace teenas::nn

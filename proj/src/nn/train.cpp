// SPDX-License-Identifier: Apache-2.0
#include "teenas/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "teenas/error.hpp"
#include "teenas/json_util.hpp"
#include "teenas/rng.hpp"

namespace teenas::nn {

namespace ju = json_util;
using nlohmann::json;

void TrainConfig::check() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("train config: beta must lie in [0,1]");
  if (!(lambda >= 0.0)) throw std::invalid_argument("train config: lambda must be >= 0");
  if (!(kd_temperature > 0.0)) throw std::invalid_argument("train config: kd_temperature must be > 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
  if (!(clip_threshold > 0.0)) throw std::invalid_argument("train config: clip_threshold must be > 0");
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("train config: epochs and batch_size must be >= 1");
  if (!(selection_margin >= 0.0)) throw std::invalid_argument("train config: selection_margin must be >= 0");
}

json to_json(const TrainConfig& tc) {
  return json{{"beta", tc.beta},
              {"lambda", tc.lambda},
              {"kd_temperature", tc.kd_temperature},
              {"learning_rate", tc.learning_rate},
              {"clip_threshold", tc.clip_threshold},
              {"epochs", tc.epochs},
              {"batch_size", tc.batch_size},
              {"seed", tc.seed},
              {"selection_margin", tc.selection_margin}};
}

TrainConfig train_config_from_json(const json& doc) {
  constexpr std::string_view ctx = "train config";
  ju::check_keys(doc, {"beta", "lambda", "kd_temperature", "learning_rate", "clip_threshold", "epochs", "batch_size",
                       "seed", "selection_margin"},
                 ctx);
  TrainConfig tc;
  tc.beta = ju::optional<double>(doc, "beta", tc.beta, ctx);
  tc.lambda = ju::optional<double>(doc, "lambda", tc.lambda, ctx);
  tc.kd_temperature = ju::optional<double>(doc, "kd_temperature", tc.kd_temperature, ctx);
  tc.learning_rate = ju::optional<double>(doc, "learning_rate", tc.learning_rate, ctx);
  tc.clip_threshold = ju::optional<double>(doc, "clip_threshold", tc.clip_threshold, ctx);
  tc.epochs = ju::optional<int>(doc, "epochs", tc.epochs, ctx);
  tc.batch_size = ju::optional<int>(doc, "batch_size", tc.batch_size, ctx);
  tc.seed = ju::require<std::uint64_t>(doc, "seed", ctx);
  tc.selection_margin = ju::optional<double>(doc, "selection_margin", tc.selection_margin, ctx);
  try {
    tc.check();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  return tc;
}

json to_json(const FitConfig& fc) {
  return json{{"learning_rate", fc.learning_rate},
              {"clip_threshold", fc.clip_threshold},
              {"epochs", fc.epochs},
              {"batch_size", fc.batch_size},
              {"seed", fc.seed}};
}

FitConfig fit_config_from_json(const json& doc) {
  constexpr std::string_view ctx = "fit config";
  ju::check_keys(doc, {"learning_rate", "clip_threshold", "epochs", "batch_size", "seed"}, ctx);
  FitConfig fc;
  fc.learning_rate = ju::optional<double>(doc, "learning_rate", fc.learning_rate, ctx);
  fc.clip_threshold = ju::optional<double>(doc, "clip_threshold", fc.clip_threshold, ctx);
  fc.epochs = ju::optional<int>(doc, "epochs", fc.epochs, ctx);
  fc.batch_size = ju::optional<int>(doc, "batch_size", fc.batch_size, ctx);
  fc.seed = ju::require<std::uint64_t>(doc, "seed", ctx);
  if (!(fc.learning_rate > 0.0) || !(fc.clip_threshold > 0.0) || fc.epochs < 0 || fc.batch_size < 1) {
    throw ParseError("fit config: out-of-range field");
  }
  return fc;
}

double clip_gradients(std::span<const Parameter* const> params, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("clip_gradients: threshold must be > 0");
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double v : p->grad.data) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > threshold) {
    const double s = threshold / norm;
    for (const Parameter* p : params) {
      for (double& v : p->grad.data) v *= s;
    }
  }
  return norm;
}

std::vector<const Parameter*> trainable_parameters(const ModelState& model) {
  std::vector<const Parameter*> out;
  for (const ParamGroup* g : {&model.backbone, &model.subnet, &model.tee_classifier}) {
    if (g->frozen) continue;
    for (const auto& p : g->params) out.push_back(&p);
  }
  return out;
}

LossParts total_poison_loss(const ModelState& model, const Tensor& x, std::span<const int> labels,
                            const Tensor& teacher_logits, const TrainConfig& tc, bool accumulate) {
  if (!(tc.lambda >= 0.0) || !(tc.beta >= 0.0 && tc.beta <= 1.0)) {
    throw std::invalid_argument("total_poison_loss: need lambda >= 0 and beta in [0,1]");
  }
  Graph g;
  const ForwardIds ids = forward_graph(g, model, g.constant(x), accumulate);
  const Id ce = cross_entropy(g, ids.combined_logits, labels);
  const Id kd = distillation_loss(g, ids.combined_logits, teacher_logits, tc.kd_temperature);
  const Id adv = cross_entropy(g, ids.backbone_logits, labels);
  const Id terms[] = {ce, kd, adv};
  const double coeffs[] = {tc.beta, 1.0 - tc.beta, -tc.lambda};
  const Id total = weighted_sum(g, terms, coeffs);
  LossParts parts{g.value(ce)[0], g.value(kd)[0], g.value(adv)[0], g.value(total)[0]};
  if (accumulate && std::isfinite(parts.total)) g.backward(total);
  return parts;
}

namespace {

std::vector<int> permutation(int n, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  return idx;
}

Tensor gather_rows(const Tensor& t, std::span<const int> idx) {
  std::vector<int> shape = t.shape;
  const std::size_t per = t.size() / static_cast<std::size_t>(shape[0]);
  shape[0] = static_cast<int>(idx.size());
  Tensor out(shape);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = t.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(idx[i]) * per);
    std::copy(src, src + static_cast<std::ptrdiff_t>(per), out.data.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

void sgd_step(std::span<const Parameter* const> params, double lr) {
  for (const Parameter* p : params) {
    auto& value = const_cast<Parameter*>(p)->value.data;
    for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * p->grad.data[i];
  }
}

void zero(std::span<const Parameter* const> params) {
  for (const Parameter* p : params) p->zero_grad();
}

}  // namespace

double fit_backbone(ModelState& model, const SyntheticDataset& data, const FitConfig& fc) {
  if (data.size() == 0) throw std::invalid_argument("fit_backbone: empty dataset");
  std::vector<const Parameter*> params;
  if (!model.backbone.frozen) {
    for (const auto& p : model.backbone.params) params.push_back(&p);
  }
  double last = 0.0;
  for (int epoch = 0; epoch < fc.epochs; ++epoch) {
    Rng rng = make_rng(fc.seed, 0xf17 + static_cast<std::uint64_t>(epoch));
    const auto order = permutation(data.size(), rng);
    double sum = 0.0;
    int steps = 0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(fc.batch_size)) {
      const std::span<const int> idx(order.data() + s, std::min<std::size_t>(fc.batch_size, order.size() - s));
      zero(params);
      Graph g;
      const ForwardIds ids = forward_graph(g, model, g.constant(data.batch(idx)), true);
      const auto labels = data.batch_labels(idx);
      const Id loss = cross_entropy(g, ids.backbone_logits, labels);
      const double v = g.value(loss)[0];
      if (!std::isfinite(v)) throw TrainingDivergence("fit_backbone: non-finite loss");
      g.backward(loss);
      clip_gradients(params, fc.clip_threshold);
      sgd_step(params, fc.learning_rate);
      sum += v;
      ++steps;
    }
    last = steps ? sum / steps : 0.0;
  }
  return last;
}

CandidateData make_candidate_data(const ModelState& frozen_backbone, const SyntheticDataset& train,
                                  const SyntheticDataset& val) {
  CandidateData d;
  auto taps_of = [&](const SyntheticDataset& ds) {
    std::vector<Tensor> taps;
    constexpr int kChunk = 256;
    for (int s = 0; s < ds.size(); s += kChunk) {
      std::vector<int> idx;
      for (int i = s; i < std::min(ds.size(), s + kChunk); ++i) idx.push_back(i);
      auto part = backbone_taps(frozen_backbone, ds.batch(idx));
      if (taps.empty()) {
        for (auto& t : part) {
          std::vector<int> shape = t.shape;
          shape[0] = 0;
          taps.push_back(Tensor(shape));
        }
      }
      for (std::size_t b = 0; b < part.size(); ++b) {
        taps[b].shape[0] += part[b].shape[0];
        taps[b].data.insert(taps[b].data.end(), part[b].data.begin(), part[b].data.end());
      }
    }
    return taps;
  };
  d.train_taps = taps_of(train);
  d.train_labels = train.labels;
  d.val_taps = taps_of(val);
  d.val_labels = val.labels;
  d.fallback_accuracy = accuracy(forward_backbone(frozen_backbone, val.inputs), val.labels);
  return d;
}

namespace {

Tensor subnet_logits(const ModelState& m, const std::vector<Tensor>& taps, std::span<const int> idx) {
  Graph g;
  std::vector<Id> ids;
  for (std::size_t b = 0; b < taps.size(); ++b) {
    if (m.config->blocks[b].active()) {
      ids.push_back(g.constant(gather_rows(taps[b], idx)));
    } else {
      ids.push_back(g.constant(Tensor({static_cast<int>(idx.size()), 1, 1})));
    }
  }
  return g.value(subnet_forward(g, m, ids, false));
}

}  // namespace

double train_candidate(const Configuration& config, const ModelState& frozen_backbone, const CandidateData& data,
                       std::uint64_t seed, const CandidateTrainOptions& options) {
  if (config.active_count() == 0) return data.fallback_accuracy;
  ModelState m;
  m.arch = frozen_backbone.arch;
  build_subnetwork(m, config, derive_seed(seed, 1));
  const auto params = trainable_parameters(m);
  const int n = static_cast<int>(data.train_labels.size());
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng = make_rng(seed, 0xca0 + static_cast<std::uint64_t>(epoch));
    const auto order = permutation(n, rng);
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(options.batch_size)) {
      const std::span<const int> idx(order.data() + s, std::min<std::size_t>(options.batch_size, order.size() - s));
      zero(params);
      Graph g;
      std::vector<Id> taps;
      for (std::size_t b = 0; b < data.train_taps.size(); ++b) {
        taps.push_back(config.blocks[b].active() ? g.constant(gather_rows(data.train_taps[b], idx))
                                                 : g.constant(Tensor({static_cast<int>(idx.size()), 1, 1})));
      }
      std::vector<int> labels;
      for (int i : idx) labels.push_back(data.train_labels[static_cast<std::size_t>(i)]);
      const Id loss = cross_entropy(g, subnet_forward(g, m, taps, true), labels);
      if (!std::isfinite(g.value(loss)[0])) throw TrainingDivergence("train_candidate: non-finite loss");
      g.backward(loss);
      clip_gradients(params, options.clip_threshold);
      sgd_step(params, options.learning_rate);
    }
  }
  const int nv = static_cast<int>(data.val_labels.size());
  std::vector<int> all(static_cast<std::size_t>(nv));
  for (int i = 0; i < nv; ++i) all[static_cast<std::size_t>(i)] = i;
  return accuracy(subnet_logits(m, data.val_taps, all), data.val_labels);
}

std::string curves_to_csv(std::span<const EpochStats> curves) {
  std::ostringstream os;
  os << "epoch,combined_acc,backbone_acc,ce,kd,adv_ce,total,selected\n" << std::setprecision(17);
  for (const auto& e : curves) {
    os << e.epoch << ',' << e.combined_acc << ',' << e.backbone_acc << ',' << e.ce << ',' << e.kd << ',' << e.adv_ce
       << ',' << e.total << ',' << (e.selected ? 1 : 0) << '\n';
  }
  return os.str();
}

std::size_t select_epoch(std::span<const EpochStats> curves, double lambda, double margin) {
  if (curves.empty()) throw std::invalid_argument("select_epoch: no epochs");
  if (!(lambda > 0.0)) return curves.size() - 1;
  double best = curves[0].combined_acc;
  for (const auto& e : curves) best = std::max(best, e.combined_acc);
  std::size_t pick = curves.size();
  for (std::size_t i = 0; i < curves.size(); ++i) {
    if (curves[i].combined_acc < best - margin) continue;
    if (pick == curves.size() || curves[i].backbone_acc <= curves[pick].backbone_acc) pick = i;
  }
  return pick;
}

std::vector<EpochStats> train_poisoned(ModelState& model, const ModelState& teacher, const SyntheticDataset& train,
                                       const SyntheticDataset& eval, const TrainConfig& tc) {
  tc.check();
  if (!model.has_subnetwork()) throw std::invalid_argument("train_poisoned: model has no sub-network");
  if (train.size() == 0) throw std::invalid_argument("train_poisoned: empty training split");
  const Tensor teacher_logits = forward_backbone(teacher, train.inputs);
  const auto params = trainable_parameters(model);
  std::vector<EpochStats> curves;
  std::vector<ModelState> snapshots;
  int bad_steps = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng rng = make_rng(tc.seed, 0x9015 + static_cast<std::uint64_t>(epoch));
    const auto order = permutation(train.size(), rng);
    EpochStats st;
    st.epoch = epoch + 1;
    int steps = 0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(tc.batch_size)) {
      const std::span<const int> idx(order.data() + s, std::min<std::size_t>(tc.batch_size, order.size() - s));
      zero(params);
      LossParts parts;
      bool finite = true;
      try {
        parts = total_poison_loss(model, train.batch(idx), train.batch_labels(idx), gather_rows(teacher_logits, idx),
                                  tc, true);
        finite = std::isfinite(parts.total);
      } catch (const NumericalError&) {
        finite = false;
      }
      if (!finite) {
        if (++bad_steps >= 3) {
          throw TrainingDivergence("train_poisoned: loss non-finite for 3 consecutive steps in epoch " +
                                   std::to_string(epoch + 1));
        }
        continue;
      }
      bad_steps = 0;
      clip_gradients(params, tc.clip_threshold);
      sgd_step(params, tc.learning_rate);
      st.ce += parts.ce;
      st.kd += parts.kd;
      st.adv_ce += parts.adv_ce;
      st.total += parts.total;
      ++steps;
    }
    if (steps > 0) {
      st.ce /= steps;
      st.kd /= steps;
      st.adv_ce /= steps;
      st.total /= steps;
    }
    st.combined_acc = accuracy(forward_combined(model, eval.inputs), eval.labels);
    st.backbone_acc = accuracy(forward_backbone(model, eval.inputs), eval.labels);
    curves.push_back(st);
    snapshots.push_back(model);
  }
  const std::size_t pick = select_epoch(curves, tc.lambda, tc.selection_margin);
  curves[pick].selected = true;
  model = std::move(snapshots[pick]);
  return curves;
}

}  // namespace teenas::nn

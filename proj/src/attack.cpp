// SPDX-License-Identifier: Apache-2.0
#include "teenas/attack.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "teenas/json_util.hpp"
#include "teenas/rng.hpp"

namespace teenas {

namespace ju = json_util;
using nlohmann::json;

const char* exposure_name(Exposure e) {
  switch (e) {
    case Exposure::NoShield: return "NoShield";
    case Exposure::BlackBox: return "BlackBox";
    case Exposure::PoisonedREE: return "PoisonedREE";
  }
  return "?";
}

Exposure exposure_from_name(const std::string& name) {
  for (Exposure e : {Exposure::NoShield, Exposure::BlackBox, Exposure::PoisonedREE}) {
    if (name == exposure_name(e)) return e;
  }
  throw ParseError("unknown attack scenario '" + name + "'");
}

void AttackScenario::check() const {
  if (!(query_fraction > 0.0 && query_fraction <= 1.0)) {
    throw std::invalid_argument("attack scenario: query_fraction must lie in (0,1]");
  }
}

json to_json(const AttackSettings& s) {
  return json{{"epochs", s.epochs},
              {"learning_rate", s.learning_rate},
              {"clip_threshold", s.clip_threshold},
              {"batch_size", s.batch_size}};
}

AttackSettings attack_settings_from_json(const json& doc) {
  constexpr std::string_view ctx = "attack settings";
  ju::check_keys(doc, {"epochs", "learning_rate", "clip_threshold", "batch_size"}, ctx);
  AttackSettings s;
  s.epochs = ju::optional<int>(doc, "epochs", s.epochs, ctx);
  s.learning_rate = ju::optional<double>(doc, "learning_rate", s.learning_rate, ctx);
  s.clip_threshold = ju::optional<double>(doc, "clip_threshold", s.clip_threshold, ctx);
  s.batch_size = ju::optional<int>(doc, "batch_size", s.batch_size, ctx);
  if (s.epochs < 0 || !(s.learning_rate > 0.0) || !(s.clip_threshold > 0.0) || s.batch_size < 1) {
    throw ParseError("attack settings: out-of-range field");
  }
  return s;
}

namespace {

void require_same_layout(const nn::ParamGroup& a, const nn::ParamGroup& b) {
  if (a.params.size() != b.params.size()) throw std::invalid_argument("init_shadow: backbone architectures differ");
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].name != b.params[i].name || a.params[i].value.shape != b.params[i].value.shape) {
      throw std::invalid_argument("init_shadow: parameter " + a.params[i].name + " differs between models");
    }
  }
}

nn::ModelState backbone_only(const nn::ModelState& m) {
  nn::ModelState out;
  out.arch = m.arch;
  out.backbone = m.backbone;
  out.backbone.frozen = false;
  return out;
}

}  // namespace

nn::ModelState init_shadow(const VictimBundle& bundle, Exposure exposure) {
  require_same_layout(bundle.public_backbone.backbone, bundle.unprotected.backbone);
  require_same_layout(bundle.public_backbone.backbone, bundle.victim.backbone);
  switch (exposure) {
    case Exposure::NoShield:
      return backbone_only(bundle.unprotected);
    case Exposure::BlackBox:
      return backbone_only(bundle.public_backbone);
    case Exposure::PoisonedREE: {
      // Start from the public model and overwrite everything the REE exposes.
      nn::ModelState shadow = backbone_only(bundle.public_backbone);
      for (auto& p : shadow.backbone.params) p.value = bundle.victim.backbone.at(p.name).value;
      return shadow;
    }
  }
  throw std::invalid_argument("init_shadow: unknown exposure");
}

int query_count_for(double query_fraction, int train_size) {
  return static_cast<int>(std::lround(query_fraction * static_cast<double>(train_size)));
}

QuerySet query_victim(const nn::ModelState& victim, const nn::SyntheticDataset& pool, int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("query_victim: query count must be >= 1");
  if (count > pool.size()) {
    throw std::invalid_argument("query_victim: " + std::to_string(count) + " queries exceed the auxiliary pool of " +
                                std::to_string(pool.size()));
  }
  std::vector<int> order(static_cast<std::size_t>(pool.size()));
  for (int i = 0; i < pool.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng = make_rng(seed, 0xa77);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  order.resize(static_cast<std::size_t>(count));
  QuerySet q;
  q.inputs = pool.batch(order);
  q.labels = nn::argmax_rows(nn::forward_combined(victim, q.inputs));
  return q;
}

double train_surrogate(nn::ModelState& shadow, const QuerySet& queries, const nn::SyntheticDataset& test,
                       const AttackSettings& settings, std::uint64_t seed) {
  if (queries.labels.empty()) throw std::invalid_argument("train_surrogate: empty query set");
  nn::SyntheticDataset ds;
  ds.recipe = test.recipe;
  ds.inputs = queries.inputs;
  ds.labels = queries.labels;
  nn::FitConfig fc;
  fc.learning_rate = settings.learning_rate;
  fc.clip_threshold = settings.clip_threshold;
  fc.epochs = settings.epochs;
  fc.batch_size = settings.batch_size;
  fc.seed = derive_seed(seed, 0x5a);
  shadow.backbone.frozen = false;
  nn::fit_backbone(shadow, ds, fc);
  return nn::accuracy(nn::forward_backbone(shadow, test.inputs), test.labels);
}

AttackReport run_attack(const VictimBundle& bundle, const AttackScenario& scenario, const AttackData& data,
                        const AttackSettings& settings) {
  scenario.check();
  if (!data.auxiliary || !data.test) throw std::invalid_argument("run_attack: missing data");
  AttackReport r;
  r.scenario = scenario.exposure;
  r.seed = scenario.seed;
  r.query_count = query_count_for(scenario.query_fraction, data.train_size);
  nn::ModelState shadow = init_shadow(bundle, scenario.exposure);
  if (scenario.exposure == Exposure::NoShield) {
    // Every weight is exposed: the copy is the stolen model.
    r.victim_accuracy = nn::accuracy(nn::forward_combined(bundle.unprotected, data.test->inputs), data.test->labels);
    r.surrogate_accuracy = nn::accuracy(nn::forward_backbone(shadow, data.test->inputs), data.test->labels);
    return r;
  }
  r.victim_accuracy = nn::accuracy(nn::forward_combined(bundle.victim, data.test->inputs), data.test->labels);
  const QuerySet q = query_victim(bundle.victim, *data.auxiliary, r.query_count, scenario.seed);
  r.surrogate_accuracy = train_surrogate(shadow, q, *data.test, settings, scenario.seed);
  return r;
}

std::vector<AttackReport> run_attack_suite(const VictimBundle& bundle, const std::vector<Exposure>& scenarios,
                                           const std::vector<std::uint64_t>& seeds, double query_fraction,
                                           const AttackData& data, const AttackSettings& settings, int workers) {
  std::vector<AttackScenario> jobs;
  for (Exposure e : scenarios) {
    for (std::uint64_t s : seeds) jobs.push_back({e, query_fraction, s});
  }
  std::vector<AttackReport> out(jobs.size());
  const std::size_t w = static_cast<std::size_t>(std::max(1, workers));
  if (w <= 1 || jobs.size() <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) out[i] = run_attack(bundle, jobs[i], data, settings);
  } else {
    std::vector<std::future<void>> futures;
    for (std::size_t t = 0; t < std::min(w, jobs.size()); ++t) {
      futures.push_back(std::async(std::launch::async, [&, t] {
        for (std::size_t i = t; i < jobs.size(); i += w) out[i] = run_attack(bundle, jobs[i], data, settings);
      }));
    }
    for (auto& f : futures) f.get();
  }
  return out;
}

std::string attack_reports_to_csv(const std::vector<AttackReport>& reports) {
  std::ostringstream os;
  os << "scenario,seed,query_count,surrogate_acc,victim_acc\n" << std::setprecision(17);
  for (const auto& r : reports) {
    os << exposure_name(r.scenario) << ',' << r.seed << ',' << r.query_count << ',' << r.surrogate_accuracy << ','
       << r.victim_accuracy << '\n';
  }
  return os.str();
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<ScenarioSummary> summarize_attacks(const std::vector<AttackReport>& reports) {
  std::vector<ScenarioSummary> out;
  for (Exposure e : {Exposure::NoShield, Exposure::BlackBox, Exposure::PoisonedREE}) {
    std::vector<double> acc;
    for (const auto& r : reports) {
      if (r.scenario == e) acc.push_back(r.surrogate_accuracy);
    }
    if (acc.empty()) continue;
    const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
    out.push_back({e, median(acc), *lo, *hi});
  }
  return out;
}

}  // namespace teenas

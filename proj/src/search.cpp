// SPDX-License-Identifier: Apache-2.0
#include "teenas/search.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "teenas/acquisition.hpp"
#include "teenas/error.hpp"
#include "teenas/json_util.hpp"
#include "teenas/rng.hpp"

namespace teenas {

using nlohmann::json;
namespace ju = json_util;

void SearchSettings::check() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("search settings: alpha must lie in [0,1]");
  if (h_limit_bytes == 0) throw std::invalid_argument("search settings: h_limit_bytes must be > 0");
  if (batch_size < 1) throw std::invalid_argument("search settings: batch_size must be >= 1");
  if (iterations < 0) throw std::invalid_argument("search settings: iterations must be >= 0");
  if (init_samples < 1) throw std::invalid_argument("search settings: init_samples must be >= 1");
  if (mc_samples < 1) throw std::invalid_argument("search settings: mc_samples must be >= 1");
  if (pool_size < 1) throw std::invalid_argument("search settings: pool_size must be >= 1");
  if (workers < 1) throw std::invalid_argument("search settings: workers must be >= 1");
}

json to_json(const SearchSettings& s) {
  return json{{"alpha", s.alpha},
              {"h_limit_bytes", s.h_limit_bytes},
              {"batch_size", s.batch_size},
              {"iterations", s.iterations},
              {"init_samples", s.init_samples},
              {"mc_samples", s.mc_samples},
              {"pool_size", s.pool_size},
              {"workers", s.workers},
              {"seed", s.seed},
              {"gp_restarts", s.gp.restarts},
              {"gp_max_iterations", s.gp.max_iterations},
              {"gp_sparsity_scale", s.gp.sparsity_scale}};
}

SearchSettings search_settings_from_json(const json& doc) {
  constexpr std::string_view ctx = "search settings";
  ju::check_keys(doc, {"alpha", "h_limit_bytes", "batch_size", "iterations", "init_samples", "mc_samples",
                       "pool_size", "workers", "seed", "gp_restarts", "gp_max_iterations", "gp_sparsity_scale"},
                 ctx);
  SearchSettings s;
  s.alpha = ju::optional<double>(doc, "alpha", s.alpha, ctx);
  s.h_limit_bytes = ju::require<std::uint64_t>(doc, "h_limit_bytes", ctx);
  s.batch_size = ju::optional<int>(doc, "batch_size", s.batch_size, ctx);
  s.iterations = ju::optional<int>(doc, "iterations", s.iterations, ctx);
  s.init_samples = ju::optional<int>(doc, "init_samples", s.init_samples, ctx);
  s.mc_samples = ju::optional<int>(doc, "mc_samples", s.mc_samples, ctx);
  s.pool_size = ju::optional<int>(doc, "pool_size", s.pool_size, ctx);
  s.workers = ju::optional<int>(doc, "workers", s.workers, ctx);
  s.seed = ju::require<std::uint64_t>(doc, "seed", ctx);
  s.gp.restarts = ju::optional<int>(doc, "gp_restarts", s.gp.restarts, ctx);
  s.gp.max_iterations = ju::optional<int>(doc, "gp_max_iterations", s.gp.max_iterations, ctx);
  s.gp.sparsity_scale = ju::optional<double>(doc, "gp_sparsity_scale", s.gp.sparsity_scale, ctx);
  try {
    s.check();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  return s;
}

GPSurrogate fit_gp(std::span<const EvaluationRecord> records, bool accuracy_objective, const GPFitOptions& options) {
  std::vector<const EvaluationRecord*> usable;
  for (const auto& r : records) {
    if (r.usable()) usable.push_back(&r);
  }
  if (usable.size() < 2) throw std::invalid_argument("fit_gp: need at least two usable records");
  const auto D = static_cast<Eigen::Index>(usable.front()->encoded.size());
  Eigen::MatrixXd X(static_cast<Eigen::Index>(usable.size()), D);
  Eigen::VectorXd y(static_cast<Eigen::Index>(usable.size()));
  for (std::size_t i = 0; i < usable.size(); ++i) {
    const auto& r = *usable[i];
    if (static_cast<Eigen::Index>(r.encoded.size()) != D) throw std::invalid_argument("fit_gp: inconsistent encodings");
    X.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(r.encoded.data(), D);
    y[static_cast<Eigen::Index>(i)] = accuracy_objective ? r.objectives->accuracy : r.objectives->latency_ms;
  }
  return GPSurrogate::fit(X, y, options);
}

namespace {

bool feasible(const Configuration& c, const SearchState& state) {
  return estimate_memory(c, *state.dims).total <= state.settings->h_limit_bytes;
}

Configuration mutate(const Configuration& base, const SearchFactorRanges& ranges, Rng& rng) {
  auto x = encode(base, ranges);
  const std::size_t flips = 1 + uniform_index(rng, 3);
  const std::vector<const std::vector<int>*> lists{&ranges.type_choices, &ranges.sd_choices, &ranges.cd_choices,
                                                   &ranges.sh_choices, &ranges.ch_choices};
  for (std::size_t f = 0; f < flips; ++f) {
    const std::size_t d = uniform_index(rng, x.size());
    const std::vector<int>& list = d == 0 ? ranges.su_choices : d == 1 ? ranges.cu_choices : *lists[(d - 2) % 5];
    const std::size_t n = list.size();
    x[d] = n <= 1 ? 0.0 : static_cast<double>(uniform_index(rng, n)) / static_cast<double>(n - 1);
  }
  return decode(x, ranges);
}

Eigen::RowVectorXd row_of(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::vector<Configuration> propose_batch(const SearchState& state, int batch_size, std::uint64_t seed) {
  if (!state.ranges || !state.dims || !state.settings) throw std::invalid_argument("propose_batch: incomplete state");
  if (batch_size < 1) throw std::invalid_argument("propose_batch: batch_size must be >= 1");
  const auto& ranges = *state.ranges;
  const bool init_phase = !state.gp_accuracy || !state.gp_latency;

  std::unordered_set<std::string> seen;
  for (const auto& r : state.records) seen.insert(r.config.key());
  const ParetoFront front = pareto_front(state.records, state.reference);

  Rng rng = make_rng(seed, 0x9001);
  const std::size_t wanted = init_phase ? static_cast<std::size_t>(batch_size)
                                        : static_cast<std::size_t>(std::max(state.settings->pool_size, batch_size));
  std::vector<Configuration> pool;
  const std::size_t max_attempts = 20 * wanted + 200;
  for (std::size_t attempt = 0; attempt < max_attempts && pool.size() < wanted; ++attempt) {
    Configuration c;
    if (!init_phase && !front.empty() && uniform01(rng) < 0.5) {
      c = mutate(front.records[uniform_index(rng, front.records.size())].config, ranges, rng);
    } else {
      c = sample_random(ranges, rng);
    }
    if (!feasible(c, state)) continue;
    if (!seen.insert(c.key()).second) continue;
    pool.push_back(std::move(c));
  }
  if (pool.empty()) throw SearchExhausted("propose_batch: no feasible unseen configuration found in the candidate pool");
  if (init_phase) return pool;

  const Eigen::Index D = static_cast<Eigen::Index>(ranges.encoded_dim());
  Eigen::MatrixXd candidates(static_cast<Eigen::Index>(pool.size()), D);
  for (std::size_t i = 0; i < pool.size(); ++i) candidates.row(static_cast<Eigen::Index>(i)) = row_of(encode(pool[i], ranges));
  Eigen::MatrixXd baseline(static_cast<Eigen::Index>(front.records.size()), D);
  for (std::size_t i = 0; i < front.records.size(); ++i) {
    baseline.row(static_cast<Eigen::Index>(i)) = row_of(front.records[i].encoded);
  }

  GPSurrogate gp_f = *state.gp_accuracy;
  GPSurrogate gp_g = *state.gp_latency;
  std::vector<bool> taken(pool.size(), false);
  std::vector<Configuration> batch;
  const int picks = std::min<int>(batch_size, static_cast<int>(pool.size()));
  for (int b = 0; b < picks; ++b) {
    const auto scores = nehvi_acquisition(gp_f, gp_g, candidates, baseline, state.reference,
                                          state.settings->mc_samples, derive_seed(seed, static_cast<std::uint64_t>(b)));
    std::size_t best = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (taken[i]) continue;
      if (best == pool.size() || scores[i] > scores[best]) best = i;
    }
    taken[best] = true;
    batch.push_back(pool[best]);
    const Eigen::VectorXd x = candidates.row(static_cast<Eigen::Index>(best)).transpose();
    gp_f = gp_f.with_observation(x, gp_f.predict(x).mean);
    gp_g = gp_g.with_observation(x, gp_g.predict(x).mean);
    baseline.conservativeResize(baseline.rows() + 1, Eigen::NoChange);
    baseline.row(baseline.rows() - 1) = x.transpose();
  }
  return batch;
}

// --- log ---------------------------------------------------------------------

json to_json(const EvaluationRecord& r) {
  json doc{{"index", r.index},
           {"round", r.round},
           {"config", to_json(r.config)},
           {"encoded", r.encoded},
           {"memory",
            {{"parameter_bytes", r.memory.parameter_bytes},
             {"peak_activation_bytes", r.memory.peak_activation_bytes},
             {"total", r.memory.total}}},
           {"feasible", r.feasible},
           {"failed", r.failed},
           {"epoch_seed", r.epoch_seed}};
  if (r.objectives) {
    doc["accuracy"] = r.objectives->accuracy;
    doc["latency_ms"] = r.objectives->latency_ms;
  }
  return doc;
}

EvaluationRecord evaluation_record_from_json(const json& doc) {
  constexpr std::string_view ctx = "evaluation record";
  ju::check_keys(doc, {"index", "round", "config", "encoded", "memory", "feasible", "failed", "epoch_seed", "accuracy",
                       "latency_ms"},
                 ctx);
  EvaluationRecord r;
  r.index = ju::require<int>(doc, "index", ctx);
  r.round = ju::require<int>(doc, "round", ctx);
  r.config = configuration_from_json(doc.at("config"));
  r.encoded = ju::require<std::vector<double>>(doc, "encoded", ctx);
  const auto& m = doc.at("memory");
  r.memory.parameter_bytes = ju::require<std::uint64_t>(m, "parameter_bytes", ctx);
  r.memory.peak_activation_bytes = ju::require<std::uint64_t>(m, "peak_activation_bytes", ctx);
  r.memory.total = ju::require<std::uint64_t>(m, "total", ctx);
  r.feasible = ju::require<bool>(doc, "feasible", ctx);
  r.failed = ju::require<bool>(doc, "failed", ctx);
  r.epoch_seed = ju::require<std::uint64_t>(doc, "epoch_seed", ctx);
  if (doc.contains("accuracy")) {
    r.objectives = ObjectivePoint{ju::require<double>(doc, "accuracy", ctx), ju::require<double>(doc, "latency_ms", ctx)};
  }
  return r;
}

SearchLog read_search_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open search log " + path.string());
  SearchLog log;
  std::string line;
  std::vector<EvaluationRecord> pending;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error&) {
      break;  // torn tail line from an interrupted write
    }
    if (line_no == 1) {
      ju::check_schema(doc, "teenas.search-log", 1);
      log.header = std::move(doc);
    } else if (doc.contains("commit")) {
      log.last_committed_round = doc.at("commit").get<int>();
      log.records.insert(log.records.end(), pending.begin(), pending.end());
      pending.clear();
    } else {
      pending.push_back(evaluation_record_from_json(doc));
    }
  }
  if (log.header.is_null()) throw ParseError("search log " + path.string() + ": missing header");
  return log;
}

namespace {

class LogWriter {
 public:
  LogWriter() = default;
  LogWriter(const std::filesystem::path& path, const json& header, const std::vector<EvaluationRecord>& committed) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot write search log " + path.string());
    out_ << header.dump() << '\n';
    int round = -1;
    for (const auto& r : committed) {
      if (r.round != round && round >= 0) out_ << json{{"commit", round}}.dump() << '\n';
      round = r.round;
      out_ << to_json(r).dump() << '\n';
    }
    if (round >= 0) out_ << json{{"commit", round}}.dump() << '\n';
    out_.flush();
  }

  void append_round(const std::vector<EvaluationRecord>& records, int round) {
    if (!out_.is_open()) return;
    for (const auto& r : records) out_ << to_json(r).dump() << '\n';
    out_ << json{{"commit", round}}.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::vector<EvaluationRecord> evaluate_batch(const std::vector<Configuration>& batch, int round, int first_index,
                                             const SearchFactorRanges& ranges, const CostProfile& profile,
                                             const BackboneDims& dims, const CandidateEvaluator& evaluator,
                                             const SearchSettings& settings) {
  std::vector<EvaluationRecord> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& r = out[i];
    r.index = first_index + static_cast<int>(i);
    r.round = round;
    r.config = batch[i];
    r.encoded = encode(batch[i], ranges);
    r.memory = estimate_memory(batch[i], dims);
    r.feasible = r.memory.total <= settings.h_limit_bytes;
    if (!r.feasible) throw std::logic_error("run_search: infeasible configuration reached evaluation");
    r.epoch_seed = derive_seed(settings.seed, 0xe000 + static_cast<std::uint64_t>(r.index));
  }
  auto eval_one = [&](std::size_t i) {
    auto& r = out[i];
    try {
      const double acc = evaluator(r.config, r.epoch_seed);
      if (!std::isfinite(acc) || acc < 0.0 || acc > 1.0) throw std::runtime_error("accuracy out of range");
      r.objectives = ObjectivePoint{acc, parallel_latency(r.config, profile, dims)};
    } catch (const std::exception&) {
      r.failed = true;
      r.objectives.reset();
    }
  };
  if (settings.workers <= 1 || batch.size() <= 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) eval_one(i);
  } else {
    // Each worker owns disjoint records; results land in candidate order.
    std::vector<std::future<void>> jobs;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(settings.workers), batch.size());
    for (std::size_t w = 0; w < workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < batch.size(); i += workers) eval_one(i);
      }));
    }
    for (auto& j : jobs) j.get();
  }
  return out;
}

}  // namespace

SearchResult run_search(const SearchFactorRanges& ranges, const CostProfile& profile, const BackboneDims& dims,
                        const CandidateEvaluator& evaluator, const SearchSettings& settings,
                        const SearchControl& control) {
  ranges.check();
  profile.check();
  settings.check();
  if (static_cast<int>(dims.blocks.size()) != ranges.num_blocks || profile.num_blocks() != dims.blocks.size()) {
    throw std::invalid_argument("run_search: ranges, profile and io_dims disagree on the block count");
  }

  SearchState state;
  state.ranges = &ranges;
  state.dims = &dims;
  state.settings = &settings;
  state.reference = {0.0, latency_ceiling(ranges, profile, dims)};

  json header = ju::schema_header("teenas.search-log", 1);
  header["settings"] = to_json(settings);
  header["ranges"] = to_json(ranges);
  header["cost_profile"] = to_json(profile);
  header["io_dims"] = to_json(dims);
  header["reference_point"] = {state.reference.accuracy_floor, state.reference.latency_ceiling};

  int start_round = 0;
  if (control.resume) {
    if (!control.checkpoint) throw std::invalid_argument("run_search: resume requires a checkpoint path");
    SearchLog log = read_search_log(*control.checkpoint);
    if (log.header != header) throw std::invalid_argument("run_search: checkpoint header does not match the inputs");
    state.records = std::move(log.records);
    start_round = log.last_committed_round + 1;
  }
  LogWriter writer;
  if (control.checkpoint) writer = LogWriter(*control.checkpoint, header, state.records);

  SearchResult result;
  for (int round = start_round; round <= settings.iterations; ++round) {
    state.gp_accuracy.reset();
    state.gp_latency.reset();
    const auto usable = std::count_if(state.records.begin(), state.records.end(),
                                      [](const EvaluationRecord& r) { return r.usable(); });
    if (round > 0 && usable >= 2) {
      GPFitOptions opt = settings.gp;
      opt.seed = derive_seed(settings.seed, 0x6000 + static_cast<std::uint64_t>(round));
      state.gp_accuracy = fit_gp(state.records, true, opt);
      opt.seed = derive_seed(opt.seed, 1);
      state.gp_latency = fit_gp(state.records, false, opt);
    }
    const int batch_size = round == 0 ? settings.init_samples : settings.batch_size;
    std::vector<Configuration> batch;
    try {
      batch = propose_batch(state, batch_size, derive_seed(settings.seed, 0x5000 + static_cast<std::uint64_t>(round)));
    } catch (const SearchExhausted&) {
      if (state.records.empty()) throw EmptyFront("run_search: no configuration satisfies the memory budget");
      result.completed_rounds = round;
      break;
    }
    auto evaluated = evaluate_batch(batch, round, static_cast<int>(state.records.size()), ranges, profile, dims,
                                    evaluator, settings);
    writer.append_round(evaluated, round);
    state.records.insert(state.records.end(), evaluated.begin(), evaluated.end());
    result.completed_rounds = round + 1;
    if (control.stop_after_round && round == *control.stop_after_round && round < settings.iterations) {
      result.paused = true;
      break;
    }
  }

  result.records = state.records;
  result.front = pareto_front(result.records, state.reference);
  if (result.front.empty()) throw EmptyFront("run_search: no feasible evaluation succeeded");
  result.hypervolume = hypervolume(result.front);
  if (!result.paused) {
    result.selected_index = select_optimal_index(result.front, settings.alpha);
    result.selected = result.front.records[result.selected_index].config;
  }
  return result;
}

}  // namespace teenas

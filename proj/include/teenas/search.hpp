// SPDX-License-Identifier: Apache-2.0
//
// Constrained bi-objective architecture search: maximize accuracy, minimize
// parallel latency, subject to the secure-memory budget. Candidates that break
// the budget are rejected before evaluation and never reach the surrogates.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "teenas/gp.hpp"
#include "teenas/latency.hpp"
#include "teenas/pareto.hpp"
#include "teenas/search_space.hpp"

namespace teenas {

struct SearchSettings {
  double alpha = 0.5;
  std::uint64_t h_limit_bytes = 24ull << 20;
  int batch_size = 4;
  int iterations = 10;
  int init_samples = 16;
  int mc_samples = 128;
  int pool_size = 256;
  int workers = 1;
  std::uint64_t seed = 0;
  GPFitOptions gp;

  void check() const;
};

nlohmann::json to_json(const SearchSettings& settings);
SearchSettings search_settings_from_json(const nlohmann::json& doc);

/// Accuracy oracle f(a); receives a per-evaluation seed. Throwing marks the record failed.
using CandidateEvaluator = std::function<double(const Configuration&, std::uint64_t epoch_seed)>;

/// Everything propose_batch needs to know about the search so far.
struct SearchState {
  const SearchFactorRanges* ranges = nullptr;
  const BackboneDims* dims = nullptr;
  const SearchSettings* settings = nullptr;
  ReferencePoint reference;
  std::vector<EvaluationRecord> records;
  std::optional<GPSurrogate> gp_accuracy;  // empty during the initial design
  std::optional<GPSurrogate> gp_latency;
};

/// Feasible, unseen, pairwise-distinct configurations. Initial design: uniform
/// random samples. Otherwise: sequential-greedy NEHVI maxima over a random pool,
/// each pick conditioned on posterior-mean fantasies of the earlier ones.
/// Throws SearchExhausted when the pool comes up empty.
std::vector<Configuration> propose_batch(const SearchState& state, int batch_size, std::uint64_t seed);

/// Fits the accuracy or latency surrogate on the usable records.
GPSurrogate fit_gp(std::span<const EvaluationRecord> records, bool accuracy_objective, const GPFitOptions& options);

struct SearchControl {
  std::optional<std::filesystem::path> checkpoint;  // append-only log
  bool resume = false;
  std::optional<int> stop_after_round;               // simulated pause
};

struct SearchResult {
  ParetoFront front;
  std::optional<Configuration> selected;  // a*; empty while paused
  std::size_t selected_index = 0;         // into front.records
  std::vector<EvaluationRecord> records;
  double hypervolume = 0.0;
  int completed_rounds = 0;
  bool paused = false;
};

/// Throws EmptyFront when no feasible configuration exists under the budget.
SearchResult run_search(const SearchFactorRanges& ranges, const CostProfile& profile, const BackboneDims& dims,
                        const CandidateEvaluator& evaluator, const SearchSettings& settings,
                        const SearchControl& control = {});

// --- checkpoint log ----------------------------------------------------------

nlohmann::json to_json(const EvaluationRecord& record);
EvaluationRecord evaluation_record_from_json(const nlohmann::json& doc);

struct SearchLog {
  nlohmann::json header;
  std::vector<EvaluationRecord> records;  // committed rounds only
  int last_committed_round = -1;
};

SearchLog read_search_log(const std::filesystem::path& path);

}  // namespace teenas

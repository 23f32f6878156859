// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration over a run directory:
//
//   profile/  latency.csv, trace_<i>.csv
//   models/   public.tnck, teacher.tnck, control.tnck, victim.tnck
//   search/   log.jsonl, records.csv, front.csv, selected.json
//   train/    curves.csv, curves_control.csv, metrics.json, sweep.csv
//   attack/   attacks.csv, control.csv
//   summary.txt, summary.json, manifest.json
//
// Each stage reads only persisted upstream artifacts and checks their digests
// against manifest.json before use.
#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "teenas/attack.hpp"
#include "teenas/latency.hpp"
#include "teenas/nn/data.hpp"
#include "teenas/nn/model.hpp"
#include "teenas/nn/train.hpp"
#include "teenas/search.hpp"
#include "teenas/search_space.hpp"

namespace teenas {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kExperimentSchema = "teenas.experiment";
inline constexpr int kExperimentVersion = 1;

/// Process exit statuses of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,  // also malformed input files
  kExitEmptyFront = 3,
  kExitDivergence = 4,
  kExitOracleMismatch = 5,
  kExitMissingArtifact = 6,
  kExitAuditMismatch = 7,
};

struct ProfilePlan {
  int samples = 200;
  std::uint64_t seed = 0;
  int traces = 3;                             // schedule traces written for the first rows
  std::vector<Configuration> configurations;  // evaluated before the sampled ones
};

struct AttackPlan {
  std::vector<Exposure> scenarios{Exposure::NoShield, Exposure::BlackBox, Exposure::PoisonedREE};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double query_fraction = 0.01;
  AttackSettings settings;
  int workers = 1;
};

struct ExperimentSpec {
  std::filesystem::path source;  // the spec file itself; relative paths resolve against its directory
  std::filesystem::path ranges_path;   // empty when the spec inlines the object
  std::filesystem::path profile_path;  // likewise
  SearchFactorRanges ranges;
  CostProfile cost_profile;

  nn::DataRecipe recipe;
  nn::DataSizes sizes;
  std::uint64_t data_seed = 0;
  nn::BackboneArch arch;
  std::uint64_t backbone_seed = 0;
  nn::FitConfig public_fit;
  nn::FitConfig teacher_fit;

  SearchSettings search;
  nn::CandidateTrainOptions candidate;
  nn::TrainConfig train;
  std::vector<double> lambda_sweep;
  std::optional<Configuration> victim_configuration;  // replaces the search pick when set

  AttackPlan attack;
  ProfilePlan profiling;
  std::filesystem::path output_dir;
};

/// Parses and validates a spec document. Unknown keys, a wrong schema version,
/// unresolvable files or missing seeds throw ParseError.
ExperimentSpec parse_experiment(const nlohmann::json& doc, const std::filesystem::path& source);
ExperimentSpec load_experiment(const std::filesystem::path& path);

/// Replaces every seed in the spec by one derived from `seed`.
void override_seeds(ExperimentSpec& spec, std::uint64_t seed);

/// Canonical form with resolved inputs inlined; the basis of the spec digest.
/// output_dir is left out so a run's identity does not depend on where it is written.
nlohmann::json to_json(const ExperimentSpec& spec);

// --- manifest ------------------------------------------------------------------

struct StageRecord {
  bool complete = false;
  std::vector<std::pair<std::string, std::string>> artifacts;  // relative path, sha256
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string spec_digest;
  std::vector<std::pair<std::string, std::string>> inputs;  // name, sha256
  std::vector<std::pair<std::string, StageRecord>> stages;  // fixed stage order

  [[nodiscard]] const StageRecord* stage(const std::string& name) const;
  StageRecord& stage(const std::string& name);
};

inline constexpr const char* kStages[] = {"profile", "search", "train", "attack", "report"};

nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& doc);

/// Thrown when an upstream artifact is absent or its digest disagrees with the manifest.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- stages ----------------------------------------------------------------------

struct StageOptions {
  bool resume = false;                    // search: continue from search/log.jsonl
  std::optional<int> stop_after_round;    // search: pause after this round
  std::optional<std::filesystem::path> out_override;
};

/// Run directory for `spec` under `options`.
std::filesystem::path run_directory(const ExperimentSpec& spec, const StageOptions& options);

struct ProfileRow {
  std::string key;
  int active_blocks = 0;
  double parallel_ms = 0.0;
  double oracle_ms = 0.0;
  double sequential_ms = 0.0;
  double backbone_ms = 0.0;
  std::uint64_t memory_bytes = 0;
};

/// Closed form, schedule oracle and sequential baseline per configuration.
/// Throws OracleMismatch when closed form and oracle differ by 1e-9 ms or more.
std::vector<ProfileRow> cmd_profile(const ExperimentSpec& spec, const StageOptions& options = {});

/// Throws EmptyFront when no feasible configuration exists.
SearchResult cmd_search(const ExperimentSpec& spec, const StageOptions& options = {});

struct TrainOutcome {
  double victim_combined = 0.0;
  double victim_backbone = 0.0;
  double control_combined = 0.0;
  double control_backbone = 0.0;
  double teacher_accuracy = 0.0;
  double public_accuracy = 0.0;
  int selected_epoch = 0;
};

/// Teacher, lambda = 0 control and the poisoned victim; accuracies on the test split.
/// Throws TrainingDivergence.
TrainOutcome cmd_train(const ExperimentSpec& spec, const StageOptions& options = {});

struct SweepRow {
  double lambda = 0.0;
  double combined = 0.0;
  double backbone = 0.0;
};

/// Poisoned training for each lambda in spec.lambda_sweep; writes train/sweep.csv.
std::vector<SweepRow> cmd_sweep(const ExperimentSpec& spec, const StageOptions& options = {});

struct AttackOutcome {
  std::vector<AttackReport> reports;
  std::vector<AttackReport> control;  // lambda = 0 victim, trunk exposed
};

AttackOutcome cmd_attack(const ExperimentSpec& spec, const StageOptions& options = {});

/// Merges stage outputs into summary.txt / summary.json. Throws MissingArtifact
/// listing the stages that have not completed.
nlohmann::json cmd_report(const ExperimentSpec& spec, const StageOptions& options = {});

/// Every stage in order.
nlohmann::json run_pipeline(const ExperimentSpec& spec, const StageOptions& options = {});

// --- shared pieces used by the stages and the acceptance checks ------------------------

/// The synthetic splits of the spec.
nn::DataBundle make_experiment_data(const ExperimentSpec& spec);

/// Public pre-training of a fresh backbone on the public split.
nn::ModelState train_public_backbone(const ExperimentSpec& spec, const nn::DataBundle& data);

/// Public backbone fine-tuned on the private training split: the unprotected model.
nn::ModelState train_teacher(const ExperimentSpec& spec, const nn::ModelState& public_backbone,
                             const nn::DataBundle& data);

/// Teacher copy plus a fresh sub-network for `config`, trained with `tc` against the teacher.
struct PoisonedRun {
  nn::ModelState model;
  std::vector<nn::EpochStats> curves;
};
PoisonedRun train_victim(const nn::ModelState& teacher, const Configuration& config, const nn::DataBundle& data,
                         const nn::TrainConfig& tc);

/// Medians and flags reported in the summary.
struct AcceptanceFlags {
  bool latency_lower_bound = false;
  bool accuracy_tolerance = false;
  bool backbone_poisoned = false;
  bool attack_ordering = false;
  bool control_leakage = false;
};

}  // namespace teenas

// SPDX-License-Identifier: Apache-2.0
//
// teenas <profile|search|train|sweep|attack|report|run> --spec <file> [--out <dir>]
//        [--seed-override <n>] [--resume] [--stop-after-round <r>] [--audit]
//
// Exit status: 0 ok, 1 other failure, 2 usage or malformed input, 3 empty
// front, 4 training divergence, 5 latency oracle mismatch, 6 missing or
// altered artifact, 7 audit mismatch.
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "teenas/digest.hpp"
#include "teenas/error.hpp"
#include "teenas/json_util.hpp"
#include "teenas/pipeline.hpp"

namespace fs = std::filesystem;
using namespace teenas;

namespace {

struct Args {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  bool resume = false;
  std::optional<int> stop_after_round;
  bool audit = false;
};

ExperimentSpec load(const Args& a) {
  ExperimentSpec spec = load_experiment(a.spec);
  if (a.seed_override) override_seeds(spec, *a.seed_override);
  return spec;
}

StageOptions stage_options(const Args& a) {
  StageOptions o;
  o.resume = a.resume;
  o.stop_after_round = a.stop_after_round;
  if (!a.out.empty()) o.out_override = fs::path(a.out);
  return o;
}

// Runs the whole pipeline twice in fresh directories and compares every
// artifact digest. Any entropy outside the spec's seeds shows up as a mismatch.
int audit(const ExperimentSpec& spec, const StageOptions& base) {
  const fs::path root = run_directory(spec, base) / "audit";
  std::string digests[2];
  nlohmann::json manifests[2];
  for (int i = 0; i < 2; ++i) {
    StageOptions o;
    o.out_override = root / (i == 0 ? "a" : "b");
    fs::remove_all(*o.out_override);
    run_pipeline(spec, o);
    manifests[i] = json_util::parse_file((*o.out_override / "manifest.json").string());
    digests[i] = sha256_file(*o.out_override / "summary.json");
  }
  if (manifests[0]["stages"] != manifests[1]["stages"] || digests[0] != digests[1]) {
    std::cerr << "audit: repeated runs disagree\n";
    for (const auto& [stage, rec] : manifests[0]["stages"].items()) {
      for (const auto& [rel, d] : rec["artifacts"].items()) {
        const auto& other = manifests[1]["stages"][stage]["artifacts"];
        if (!other.contains(rel) || other[rel] != d) std::cerr << "  differs: " << rel << "\n";
      }
    }
    return kExitAuditMismatch;
  }
  std::cout << "audit: two runs produced identical artifacts, summary " << digests[0] << "\n";
  return kExitOk;
}

int dispatch(const std::string& command, const Args& a) {
  const ExperimentSpec spec = load(a);
  const StageOptions o = stage_options(a);
  if (a.audit) return audit(spec, o);
  if (command == "profile") {
    const auto rows = cmd_profile(spec, o);
    std::cout << "profile: " << rows.size() << " configurations, closed form matches the schedule oracle\n";
  } else if (command == "search") {
    const SearchResult r = cmd_search(spec, o);
    if (r.paused) {
      std::cout << "search: paused after round " << r.completed_rounds << "\n";
    } else {
      std::cout << "search: " << r.records.size() << " evaluations, front of " << r.front.records.size()
                << ", selected " << r.selected->key() << "\n";
    }
  } else if (command == "train") {
    const TrainOutcome t = cmd_train(spec, o);
    std::cout << "train: combined " << t.victim_combined << " (lambda 0: " << t.control_combined << "), backbone "
              << t.victim_backbone << "\n";
  } else if (command == "sweep") {
    for (const auto& r : cmd_sweep(spec, o)) {
      std::cout << "sweep: lambda " << r.lambda << " combined " << r.combined << " backbone " << r.backbone << "\n";
    }
  } else if (command == "attack") {
    const AttackOutcome out = cmd_attack(spec, o);
    for (const auto& s : summarize_attacks(out.reports)) {
      std::cout << "attack: " << exposure_name(s.scenario) << " median " << s.median << "\n";
    }
  } else if (command == "report") {
    cmd_report(spec, o);
    std::cout << "report: " << (run_directory(spec, o) / "summary.txt").string() << "\n";
  } else {
    const nlohmann::json r = run_pipeline(spec, o);
    if (r.contains("paused_after_round")) {
      std::cout << "run: paused after round " << r["paused_after_round"] << "\n";
    } else {
      std::cout << "run: " << (run_directory(spec, o) / "summary.txt").string() << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TEE sub-network search, self-poisoning training and model-stealing evaluation"};
  app.require_subcommand(1, 1);
  Args a;
  std::uint64_t seed = 0;
  int stop = 0;
  const char* commands[][2] = {{"profile", "latency closed form vs schedule oracle and baselines"},
                               {"search", "constrained bi-objective architecture search"},
                               {"train", "teacher, lambda 0 control and poisoned victim"},
                               {"sweep", "poisoned training over the spec's lambda_sweep"},
                               {"attack", "model-stealing scenarios against the victim"},
                               {"report", "merge stage outputs into summary.txt / summary.json"},
                               {"run", "every stage in order"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--spec", a.spec, "experiment spec (JSON)")->required();
    sub->add_option("--out", a.out, "run directory (default: the spec's output_dir)");
    sub->add_option("--seed-override", seed, "derive every seed from this value");
    sub->add_flag("--audit", a.audit, "run the pipeline twice and require identical artifacts");
    if (std::string(name) == "search" || std::string(name) == "run") {
      sub->add_flag("--resume", a.resume, "continue from the search log");
      sub->add_option("--stop-after-round", stop, "pause the search after this round");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed-override")) a.seed_override = seed;
  if (sub->get_option_no_throw("--stop-after-round") && sub->count("--stop-after-round")) a.stop_after_round = stop;

  try {
    return dispatch(sub->get_name(), a);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const EmptyFront& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEmptyFront;
  } catch (const TrainingDivergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const OracleMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOracleMismatch;
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingArtifact;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

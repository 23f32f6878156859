// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "teenas/digest.hpp"
#include "teenas/error.hpp"
#include "teenas/json_util.hpp"
#include "teenas/pipeline.hpp"

using namespace teenas;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(TEENAS_SOURCE_DIR) / "configs";

nlohmann::json smoke_doc() { return json_util::parse_file((kConfigs / "smoke.json").string()); }

ExperimentSpec parse(const nlohmann::json& doc) { return parse_experiment(doc, kConfigs / "smoke.json"); }

StageOptions fresh(const std::string& name) {
  StageOptions o;
  o.out_override = fs::temp_directory_path() / "teenas_unit" / name;
  fs::remove_all(*o.out_override);
  return o;
}

}  // namespace

TEST_CASE("shipped specs parse") {
  for (const char* name : {"smoke.json", "experiment.json"}) {
    const ExperimentSpec s = load_experiment(kConfigs / name);
    CHECK(s.ranges.num_blocks == static_cast<int>(s.cost_profile.num_blocks()));
    nlohmann::json doc = to_json(s);
    doc["output_dir"] = s.output_dir.string();
    const ExperimentSpec back = parse_experiment(doc, s.source);
    CHECK(to_json(back) == to_json(s));
    CHECK(back.output_dir == s.output_dir);
  }
}

TEST_CASE("malformed specs are rejected") {
  nlohmann::json doc = smoke_doc();
  doc["surprise"] = 1;
  CHECK_THROWS_AS(parse(doc), ParseError);
  doc = smoke_doc();
  doc["version"] = 99;
  CHECK_THROWS_AS(parse(doc), ParseError);
  doc = smoke_doc();
  doc["ranges"] = "no_such_file.json";
  CHECK_THROWS_AS(parse(doc), ParseError);
  doc = smoke_doc();
  doc["data"]["recipe"]["num_classes"] = 5;
  CHECK_THROWS_AS(parse(doc), ParseError);
  doc = smoke_doc();
  doc["attack"]["query_fraction"] = 0.9;
  CHECK_THROWS_AS(parse(doc), ParseError);
  doc = smoke_doc();
  doc["train"].erase("seed");
  CHECK_THROWS_AS(parse(doc), ParseError);
  CHECK_THROWS_AS(load_experiment(kConfigs / "absent.json"), ParseError);
}

TEST_CASE("seed override changes every seed deterministically") {
  ExperimentSpec a = load_experiment(kConfigs / "smoke.json");
  ExperimentSpec b = a;
  override_seeds(a, 123);
  override_seeds(b, 123);
  CHECK(to_json(a) == to_json(b));
  CHECK(a.search.seed != load_experiment(kConfigs / "smoke.json").search.seed);
}

TEST_CASE("stages refuse to run on missing or altered upstream artifacts") {
  const ExperimentSpec spec = load_experiment(kConfigs / "smoke.json");
  const StageOptions o = fresh("pipeline_missing");
  CHECK_THROWS_AS(cmd_train(spec, o), MissingArtifact);
  CHECK_THROWS_AS(cmd_report(spec, o), MissingArtifact);

  const auto rows = cmd_profile(spec, o);
  CHECK(rows.size() >= static_cast<std::size_t>(spec.profiling.samples));
  for (const auto& r : rows) {
    CHECK(std::abs(r.parallel_ms - r.oracle_ms) < 1e-9);
    CHECK(r.parallel_ms >= r.backbone_ms - 1e-12);
  }
  cmd_search(spec, o);
  const fs::path selected = *o.out_override / "search" / "selected.json";
  {
    std::ofstream os(selected, std::ios::app);
    os << " ";
  }
  CHECK_THROWS_AS(cmd_train(spec, o), MissingArtifact);
}

TEST_CASE("a full smoke run is reproducible and reports every stage") {
  const ExperimentSpec spec = load_experiment(kConfigs / "smoke.json");
  const StageOptions a = fresh("pipeline_a");
  const StageOptions b = fresh("pipeline_b");
  run_pipeline(spec, a);
  run_pipeline(spec, b);
  CHECK(sha256_file(*a.out_override / "summary.json") == sha256_file(*b.out_override / "summary.json"));
  const RunManifest m = manifest_from_json(json_util::parse_file((*a.out_override / "manifest.json").string()));
  for (const char* stage : kStages) {
    REQUIRE(m.stage(stage) != nullptr);
    CHECK(m.stage(stage)->complete);
  }
  // Re-running the report over finished stages changes nothing.
  const std::string before = sha256_file(*a.out_override / "summary.txt");
  cmd_report(spec, a);
  CHECK(sha256_file(*a.out_override / "summary.txt") == before);

  // The run directory is tied to its spec.
  ExperimentSpec other = spec;
  other.train.lambda = 0.01;
  CHECK_THROWS_AS(cmd_report(other, a), ParseError);
}

TEST_CASE("sweep writes one row per lambda") {
  const ExperimentSpec spec = load_experiment(kConfigs / "smoke.json");
  const StageOptions o = fresh("pipeline_sweep");
  cmd_profile(spec, o);
  cmd_search(spec, o);
  cmd_train(spec, o);
  const auto rows = cmd_sweep(spec, o);
  REQUIRE(rows.size() == spec.lambda_sweep.size());
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].lambda == spec.lambda_sweep[i]);
  CHECK(fs::exists(*o.out_override / "train" / "sweep.csv"));
}

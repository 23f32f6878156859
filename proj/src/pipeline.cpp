// SPDX-License-Identifier: Apache-2.0
#include "teenas/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "teenas/digest.hpp"
#include "teenas/error.hpp"
#include "teenas/json_util.hpp"
#include "teenas/nn/checkpoint.hpp"
#include "teenas/rng.hpp"

namespace teenas {

namespace fs = std::filesystem;
namespace ju = json_util;
using nlohmann::json;

// --- spec parsing ------------------------------------------------------------------

namespace {

json to_json(const nn::CandidateTrainOptions& o) {
  return json{{"learning_rate", o.learning_rate},
              {"clip_threshold", o.clip_threshold},
              {"batch_size", o.batch_size},
              {"epochs", o.epochs}};
}

nn::CandidateTrainOptions candidate_options_from_json(const json& doc) {
  constexpr std::string_view ctx = "candidate";
  ju::check_keys(doc, {"learning_rate", "clip_threshold", "batch_size", "epochs"}, ctx);
  nn::CandidateTrainOptions o;
  o.learning_rate = ju::optional<double>(doc, "learning_rate", o.learning_rate, ctx);
  o.clip_threshold = ju::optional<double>(doc, "clip_threshold", o.clip_threshold, ctx);
  o.batch_size = ju::optional<int>(doc, "batch_size", o.batch_size, ctx);
  o.epochs = ju::optional<int>(doc, "epochs", o.epochs, ctx);
  if (!(o.learning_rate > 0.0) || !(o.clip_threshold > 0.0) || o.batch_size < 1 || o.epochs < 1) {
    throw ParseError("candidate: out-of-range field");
  }
  return o;
}

json to_json(const nn::DataSizes& s) {
  return json{{"public", s.public_count}, {"train", s.train}, {"val", s.val}, {"test", s.test}, {"auxiliary", s.auxiliary}};
}

nn::DataSizes data_sizes_from_json(const json& doc) {
  constexpr std::string_view ctx = "data sizes";
  ju::check_keys(doc, {"public", "train", "val", "test", "auxiliary"}, ctx);
  nn::DataSizes s;
  s.public_count = ju::optional<int>(doc, "public", s.public_count, ctx);
  s.train = ju::optional<int>(doc, "train", s.train, ctx);
  s.val = ju::optional<int>(doc, "val", s.val, ctx);
  s.test = ju::optional<int>(doc, "test", s.test, ctx);
  s.auxiliary = ju::optional<int>(doc, "auxiliary", s.auxiliary, ctx);
  if (s.public_count < 1 || s.train < 1 || s.val < 1 || s.test < 1 || s.auxiliary < 1) {
    throw ParseError("data sizes: every split needs at least one sample");
  }
  return s;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

json load_input(const fs::path& path, std::string_view what) {
  if (!fs::exists(path)) throw ParseError(std::string(what) + ": file not found: " + path.string());
  return ju::parse_file(path.string());
}

}  // namespace

ExperimentSpec parse_experiment(const json& doc, const fs::path& source) {
  constexpr std::string_view ctx = "experiment";
  ju::check_schema(doc, kExperimentSchema, kExperimentVersion);
  ju::check_keys(doc,
                 {"schema", "version", "ranges", "cost_profile", "data", "backbone", "public_fit", "teacher_fit",
                  "search", "candidate", "train", "lambda_sweep", "victim_configuration", "attack", "profile",
                  "output_dir"},
                 ctx);
  ExperimentSpec s;
  s.source = source;
  const fs::path base = source.has_parent_path() ? source.parent_path() : fs::path(".");

  // Inputs are file paths, or inline objects as in the canonical form.
  const json ranges = ju::require<json>(doc, "ranges", ctx);
  const json costs = ju::require<json>(doc, "cost_profile", ctx);
  if (ranges.is_string()) {
    s.ranges_path = resolve(base, ranges.get<std::string>());
    s.ranges = ranges_from_json(load_input(s.ranges_path, "ranges"));
  } else {
    s.ranges = ranges_from_json(ranges);
  }
  if (costs.is_string()) {
    s.profile_path = resolve(base, costs.get<std::string>());
    s.cost_profile = cost_profile_from_json(load_input(s.profile_path, "cost profile"));
  } else {
    s.cost_profile = cost_profile_from_json(costs);
  }

  const json data = ju::require<json>(doc, "data", ctx);
  ju::check_keys(data, {"recipe", "sizes", "seed"}, "data");
  if (data.contains("recipe")) s.recipe = nn::data_recipe_from_json(data["recipe"]);
  if (data.contains("sizes")) s.sizes = data_sizes_from_json(data["sizes"]);
  s.data_seed = ju::require<std::uint64_t>(data, "seed", "data");

  const json backbone = ju::require<json>(doc, "backbone", ctx);
  ju::check_keys(backbone, {"arch", "seed"}, "backbone");
  if (backbone.contains("arch")) s.arch = nn::backbone_arch_from_json(backbone["arch"]);
  s.backbone_seed = ju::require<std::uint64_t>(backbone, "seed", "backbone");
  try {
    s.arch.check();
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("backbone: ") + e.what());
  }
  if (s.arch.num_classes != s.recipe.num_classes || s.arch.input_resolution != s.recipe.resolution ||
      s.arch.input_channels != s.recipe.channels) {
    throw ParseError("backbone: input geometry or class count disagrees with the data recipe");
  }
  if (static_cast<int>(s.arch.blocks.size()) != s.ranges.num_blocks ||
      s.cost_profile.num_blocks() != s.arch.blocks.size()) {
    throw ParseError("experiment: backbone, ranges and cost profile disagree on the block count");
  }

  s.public_fit = nn::fit_config_from_json(ju::require<json>(doc, "public_fit", ctx));
  s.teacher_fit = nn::fit_config_from_json(ju::require<json>(doc, "teacher_fit", ctx));
  s.search = search_settings_from_json(ju::require<json>(doc, "search", ctx));
  if (doc.contains("candidate")) s.candidate = candidate_options_from_json(doc["candidate"]);
  s.train = nn::train_config_from_json(ju::require<json>(doc, "train", ctx));
  s.lambda_sweep = ju::optional<std::vector<double>>(doc, "lambda_sweep", {}, ctx);
  for (double l : s.lambda_sweep) {
    if (!(l >= 0.0)) throw ParseError("lambda_sweep: values must be >= 0");
  }
  if (doc.contains("victim_configuration")) {
    s.victim_configuration = configuration_from_json(doc["victim_configuration"]);
    if (const auto v = validate(*s.victim_configuration, s.ranges); !v) {
      throw ParseError("victim_configuration: invalid " + v.violation);
    }
  }

  const json attack = ju::require<json>(doc, "attack", ctx);
  ju::check_keys(attack, {"scenarios", "seeds", "query_fraction", "settings", "workers"}, "attack");
  if (attack.contains("scenarios")) {
    s.attack.scenarios.clear();
    for (const auto& n : ju::require<std::vector<std::string>>(attack, "scenarios", "attack")) {
      s.attack.scenarios.push_back(exposure_from_name(n));
    }
  }
  s.attack.seeds = ju::require<std::vector<std::uint64_t>>(attack, "seeds", "attack");
  s.attack.query_fraction = ju::optional<double>(attack, "query_fraction", s.attack.query_fraction, "attack");
  if (attack.contains("settings")) s.attack.settings = attack_settings_from_json(attack["settings"]);
  s.attack.workers = ju::optional<int>(attack, "workers", s.attack.workers, "attack");
  if (s.attack.seeds.empty() || s.attack.scenarios.empty()) throw ParseError("attack: need scenarios and seeds");
  try {
    AttackScenario{Exposure::BlackBox, s.attack.query_fraction, 0}.check();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  if (query_count_for(s.attack.query_fraction, s.sizes.train) > s.sizes.auxiliary) {
    throw ParseError("attack: query budget exceeds the auxiliary pool");
  }

  const json profile = ju::require<json>(doc, "profile", ctx);
  ju::check_keys(profile, {"samples", "seed", "traces", "configurations"}, "profile");
  s.profiling.samples = ju::optional<int>(profile, "samples", s.profiling.samples, "profile");
  s.profiling.seed = ju::require<std::uint64_t>(profile, "seed", "profile");
  s.profiling.traces = ju::optional<int>(profile, "traces", s.profiling.traces, "profile");
  if (profile.contains("configurations")) {
    for (const auto& c : profile["configurations"]) {
      s.profiling.configurations.push_back(configuration_from_json(c));
      if (const auto v = validate(s.profiling.configurations.back(), s.ranges); !v) {
        throw ParseError("profile configuration: invalid " + v.violation);
      }
    }
  }
  if (s.profiling.samples < 0 || s.profiling.traces < 0) throw ParseError("profile: negative count");

  s.output_dir = resolve(base, ju::require<std::string>(doc, "output_dir", ctx));
  return s;
}

ExperimentSpec load_experiment(const fs::path& path) {
  if (!fs::exists(path)) throw ParseError("experiment spec not found: " + path.string());
  return parse_experiment(ju::parse_file(path.string()), path);
}

void override_seeds(ExperimentSpec& spec, std::uint64_t seed) {
  spec.data_seed = derive_seed(seed, 1);
  spec.backbone_seed = derive_seed(seed, 2);
  spec.public_fit.seed = derive_seed(seed, 3);
  spec.teacher_fit.seed = derive_seed(seed, 4);
  spec.search.seed = derive_seed(seed, 5);
  spec.train.seed = derive_seed(seed, 6);
  spec.profiling.seed = derive_seed(seed, 7);
  for (std::size_t i = 0; i < spec.attack.seeds.size(); ++i) spec.attack.seeds[i] = derive_seed(seed, 100 + i);
}

json to_json(const ExperimentSpec& s) {
  json scenarios = json::array();
  for (Exposure e : s.attack.scenarios) scenarios.push_back(exposure_name(e));
  json configs = json::array();
  for (const auto& c : s.profiling.configurations) configs.push_back(to_json(c));
  json doc = ju::schema_header(kExperimentSchema, kExperimentVersion);
  doc["ranges"] = to_json(s.ranges);
  doc["cost_profile"] = to_json(s.cost_profile);
  doc["data"] = {{"recipe", nn::to_json(s.recipe)}, {"sizes", to_json(s.sizes)}, {"seed", s.data_seed}};
  doc["backbone"] = {{"arch", nn::to_json(s.arch)}, {"seed", s.backbone_seed}};
  doc["public_fit"] = nn::to_json(s.public_fit);
  doc["teacher_fit"] = nn::to_json(s.teacher_fit);
  doc["search"] = to_json(s.search);
  doc["candidate"] = to_json(s.candidate);
  doc["train"] = nn::to_json(s.train);
  doc["lambda_sweep"] = s.lambda_sweep;
  if (s.victim_configuration) doc["victim_configuration"] = to_json(*s.victim_configuration);
  doc["attack"] = {{"scenarios", scenarios},
                   {"seeds", s.attack.seeds},
                   {"query_fraction", s.attack.query_fraction},
                   {"settings", to_json(s.attack.settings)},
                   {"workers", s.attack.workers}};
  doc["profile"] = {{"samples", s.profiling.samples},
                    {"seed", s.profiling.seed},
                    {"traces", s.profiling.traces},
                    {"configurations", configs}};
  return doc;
}

// --- manifest ------------------------------------------------------------------------

const StageRecord* RunManifest::stage(const std::string& name) const {
  for (const auto& [n, r] : stages) {
    if (n == name) return &r;
  }
  return nullptr;
}

StageRecord& RunManifest::stage(const std::string& name) {
  for (auto& [n, r] : stages) {
    if (n == name) return r;
  }
  stages.emplace_back(name, StageRecord{});
  std::sort(stages.begin(), stages.end(), [](const auto& a, const auto& b) {
    const auto pos = [](const std::string& n) {
      return std::find_if(std::begin(kStages), std::end(kStages), [&](const char* s) { return n == s; }) -
             std::begin(kStages);
    };
    return pos(a.first) < pos(b.first);
  });
  return stage(name);
}

json to_json(const RunManifest& m) {
  json inputs = json::object();
  for (const auto& [n, d] : m.inputs) inputs[n] = d;
  json stages = json::object();
  for (const auto& [n, r] : m.stages) {
    json artifacts = json::object();
    for (const auto& [p, d] : r.artifacts) artifacts[p] = d;
    stages[n] = {{"complete", r.complete}, {"artifacts", artifacts}};
  }
  json doc = ju::schema_header("teenas.manifest", 1);
  doc["tool_version"] = m.tool_version;
  doc["spec_digest"] = m.spec_digest;
  doc["inputs"] = inputs;
  doc["stages"] = stages;
  return doc;
}

RunManifest manifest_from_json(const json& doc) {
  constexpr std::string_view ctx = "manifest";
  ju::check_schema(doc, "teenas.manifest", 1);
  ju::check_keys(doc, {"schema", "version", "tool_version", "spec_digest", "inputs", "stages"}, ctx);
  RunManifest m;
  m.tool_version = ju::require<std::string>(doc, "tool_version", ctx);
  m.spec_digest = ju::require<std::string>(doc, "spec_digest", ctx);
  const json inputs = ju::require<json>(doc, "inputs", ctx);
  for (const auto& [n, d] : inputs.items()) m.inputs.emplace_back(n, d.get<std::string>());
  const json stages = ju::require<json>(doc, "stages", ctx);
  for (const auto& [n, r] : stages.items()) {
    StageRecord& rec = m.stage(n);
    rec.complete = ju::require<bool>(r, "complete", "manifest stage");
    const json artifacts = ju::require<json>(r, "artifacts", "manifest stage");
    for (const auto& [p, d] : artifacts.items()) rec.artifacts.emplace_back(p, d.get<std::string>());
  }
  return m;
}

// --- run directory plumbing ---------------------------------------------------------------

namespace {

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string quoted(const std::string& s) { return '"' + s + '"'; }

class RunDir {
 public:
  RunDir(const ExperimentSpec& spec, const StageOptions& options) : root_(run_directory(spec, options)) {
    fs::create_directories(root_);
    const std::string digest = sha256_hex(to_json(spec).dump());
    const fs::path mpath = root_ / "manifest.json";
    if (fs::exists(mpath)) {
      manifest_ = manifest_from_json(ju::parse_file(mpath.string()));
      if (manifest_.spec_digest != digest) {
        throw ParseError("run directory " + root_.string() + " belongs to a different experiment spec");
      }
    } else {
      manifest_.spec_digest = digest;
    }
    manifest_.inputs = {{"cost_profile", sha256_hex(to_json(spec.cost_profile).dump())},
                        {"ranges", sha256_hex(to_json(spec.ranges).dump())},
                        {"spec", digest}};
  }

  [[nodiscard]] const fs::path& root() const { return root_; }
  [[nodiscard]] fs::path path(const std::string& rel) const { return root_ / rel; }

  void begin(const std::string& stage) {
    StageRecord& r = manifest_.stage(stage);
    r.complete = false;
    r.artifacts.clear();
    save();
  }

  void put(const std::string& stage, const std::string& rel, const std::string& bytes) {
    fs::create_directories(path(rel).parent_path());
    write_text_file(path(rel), bytes);
    record(stage, rel);
  }

  void record(const std::string& stage, const std::string& rel) {
    StageRecord& r = manifest_.stage(stage);
    const std::string d = sha256_file(path(rel));
    auto it = std::find_if(r.artifacts.begin(), r.artifacts.end(), [&](const auto& a) { return a.first == rel; });
    if (it == r.artifacts.end()) {
      r.artifacts.emplace_back(rel, d);
      std::sort(r.artifacts.begin(), r.artifacts.end());
    } else {
      it->second = d;
    }
    save();
  }

  void complete(const std::string& stage) {
    manifest_.stage(stage).complete = true;
    save();
  }

  /// Verified path of an upstream artifact.
  fs::path require(const std::string& stage, const std::string& rel) const {
    const StageRecord* r = manifest_.stage(stage);
    if (!r) throw MissingArtifact("stage '" + stage + "' has not run in " + root_.string());
    const auto it = std::find_if(r->artifacts.begin(), r->artifacts.end(), [&](const auto& a) { return a.first == rel; });
    if (it == r->artifacts.end()) throw MissingArtifact("artifact " + rel + " is not recorded in the manifest");
    if (!fs::exists(path(rel))) throw MissingArtifact("artifact " + rel + " is missing");
    if (sha256_file(path(rel)) != it->second) throw MissingArtifact("artifact " + rel + " does not match its digest");
    return path(rel);
  }

  void require_complete(const std::string& stage) const {
    const StageRecord* r = manifest_.stage(stage);
    if (!r || !r->complete) throw MissingArtifact("stage '" + stage + "' has not completed in " + root_.string());
  }

  [[nodiscard]] const RunManifest& manifest() const { return manifest_; }

 private:
  void save() const {
    const fs::path tmp = root_ / "manifest.json.tmp";
    write_text_file(tmp, dump(to_json(manifest_)));
    fs::rename(tmp, root_ / "manifest.json");
  }

  fs::path root_;
  RunManifest manifest_;
};

nn::CheckpointMeta model_meta(const ExperimentSpec& spec, const std::string& role, const json& seeds) {
  nn::CheckpointMeta meta;
  meta.recipe = spec.recipe.id;
  meta.seeds = seeds;
  meta.extra = {{"role", role}};
  return meta;
}

void put_model(RunDir& dir, const std::string& stage, const std::string& rel, const nn::ModelState& model,
               nn::CheckpointMeta meta) {
  if (model.config) meta.config_hash = nn::configuration_hash(*model.config);
  dir.put(stage, rel, nn::serialize_checkpoint(model, meta));
}

nn::ModelState get_model(const RunDir& dir, const std::string& stage, const std::string& rel) {
  return nn::load_checkpoint(dir.require(stage, rel)).model;
}

double test_accuracy(const nn::ModelState& m, const nn::SyntheticDataset& test, bool combined) {
  return nn::accuracy(combined ? nn::forward_combined(m, test.inputs) : nn::forward_backbone(m, test.inputs),
                      test.labels);
}

}  // namespace

fs::path run_directory(const ExperimentSpec& spec, const StageOptions& options) {
  return options.out_override ? *options.out_override : spec.output_dir;
}

// --- shared pieces ------------------------------------------------------------------------

nn::DataBundle make_experiment_data(const ExperimentSpec& spec) {
  return nn::make_data_bundle(spec.recipe, spec.sizes, spec.data_seed);
}

nn::ModelState train_public_backbone(const ExperimentSpec& spec, const nn::DataBundle& data) {
  nn::ModelState m = nn::build_backbone(spec.arch, spec.backbone_seed);
  nn::fit_backbone(m, data.public_split, spec.public_fit);
  m.round_to_storage();
  return m;
}

nn::ModelState train_teacher(const ExperimentSpec& spec, const nn::ModelState& public_backbone,
                             const nn::DataBundle& data) {
  nn::ModelState m = public_backbone;
  m.backbone.frozen = false;
  nn::fit_backbone(m, data.train, spec.teacher_fit);
  m.round_to_storage();
  return m;
}

PoisonedRun train_victim(const nn::ModelState& teacher, const Configuration& config, const nn::DataBundle& data,
                         const nn::TrainConfig& tc) {
  PoisonedRun run;
  run.model = teacher;
  run.model.backbone.frozen = false;
  nn::build_subnetwork(run.model, config, derive_seed(tc.seed, 0x5b));
  run.curves = nn::train_poisoned(run.model, teacher, data.train, data.val, tc);
  run.model.round_to_storage();
  return run;
}

// --- profile ---------------------------------------------------------------------------------

std::vector<ProfileRow> cmd_profile(const ExperimentSpec& spec, const StageOptions& options) {
  RunDir dir(spec, options);
  dir.begin("profile");
  const BackboneDims dims = spec.arch.dims();
  const int L = spec.ranges.num_blocks;

  std::vector<Configuration> configs{empty_configuration(spec.ranges)};
  configs.insert(configs.end(), spec.profiling.configurations.begin(), spec.profiling.configurations.end());
  Rng rng = make_rng(spec.profiling.seed, 0x9f0f);
  for (int i = 0; i < spec.profiling.samples; ++i) configs.push_back(sample_random(spec.ranges, rng));

  std::vector<ProfileRow> rows;
  std::ostringstream csv;
  csv << "key,active_blocks,parallel_ms,oracle_ms,sequential_ms,backbone_ms,memory_bytes\n";
  double worst_gap = 0.0;
  std::string worst_key;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const Configuration& c = configs[i];
    ProfileRow r;
    r.key = c.key();
    r.active_blocks = c.active_count();
    r.parallel_ms = parallel_latency(c, spec.cost_profile, dims);
    const ScheduleTrace trace = simulate_schedule(c, spec.cost_profile, dims);
    r.oracle_ms = trace.makespan_ms;
    r.sequential_ms = sequential_baseline_latency(L - std::max(1, r.active_blocks), spec.cost_profile, dims);
    r.backbone_ms = spec.cost_profile.backbone_ms();
    r.memory_bytes = estimate_memory(c, dims).total;
    const double gap = std::abs(r.parallel_ms - r.oracle_ms);
    if (gap > worst_gap) {
      worst_gap = gap;
      worst_key = r.key;
    }
    csv << quoted(r.key) << ',' << r.active_blocks << ',' << fmt(r.parallel_ms) << ',' << fmt(r.oracle_ms) << ','
        << fmt(r.sequential_ms) << ',' << fmt(r.backbone_ms) << ',' << r.memory_bytes << '\n';
    if (static_cast<int>(i) < spec.profiling.traces) {
      dir.put("profile", "profile/trace_" + std::to_string(i) + ".csv", trace.to_csv());
    }
    rows.push_back(r);
  }
  dir.put("profile", "profile/latency.csv", csv.str());

  bool lower_bound = true;
  int sequential_slower = 0;
  for (const auto& r : rows) {
    lower_bound = lower_bound && r.parallel_ms >= r.backbone_ms && (r.active_blocks > 0 || r.parallel_ms == r.backbone_ms);
    if (r.sequential_ms >= r.parallel_ms) ++sequential_slower;
  }
  const json summary = {{"rows", rows.size()},
                        {"backbone_ms", spec.cost_profile.backbone_ms()},
                        {"max_oracle_gap_ms", worst_gap},
                        {"lower_bound_holds", lower_bound},
                        {"sequential_not_faster", sequential_slower}};
  dir.put("profile", "profile/summary.json", dump(summary));
  if (worst_gap >= 1e-9) {
    throw OracleMismatch("closed-form latency and schedule oracle differ by " + fmt(worst_gap) + " ms for " +
                         worst_key);
  }
  dir.complete("profile");
  return rows;
}

// --- search ------------------------------------------------------------------------------------

namespace {

std::string records_csv(const std::vector<EvaluationRecord>& records) {
  std::ostringstream os;
  os << "index,round,key,feasible,failed,accuracy,latency_ms,memory_bytes,epoch_seed\n";
  for (const auto& r : records) {
    os << r.index << ',' << r.round << ',' << quoted(r.config.key()) << ',' << r.feasible << ',' << r.failed << ',';
    if (r.objectives) {
      os << fmt(r.objectives->accuracy) << ',' << fmt(r.objectives->latency_ms);
    } else {
      os << ',';
    }
    os << ',' << r.memory.total << ',' << r.epoch_seed << '\n';
  }
  return os.str();
}

}  // namespace

SearchResult cmd_search(const ExperimentSpec& spec, const StageOptions& options) {
  RunDir dir(spec, options);
  const std::string public_rel = "models/public.tnck";
  const nn::DataBundle data = make_experiment_data(spec);
  nn::ModelState public_model;
  const StageRecord* prior = dir.manifest().stage("search");
  const bool have_public = options.resume && prior &&
                           std::any_of(prior->artifacts.begin(), prior->artifacts.end(),
                                       [&](const auto& a) { return a.first == public_rel; });
  if (have_public) {
    public_model = get_model(dir, "search", public_rel);
  } else {
    dir.begin("search");
    public_model = train_public_backbone(spec, data);
    put_model(dir, "search", public_rel, public_model,
              model_meta(spec, "public",
                         {{"data", spec.data_seed}, {"init", spec.backbone_seed}, {"fit", spec.public_fit.seed}}));
  }
  public_model.backbone.frozen = true;
  const nn::CandidateData cdata = nn::make_candidate_data(public_model, data.train, data.val);
  const CandidateEvaluator evaluator = [&](const Configuration& c, std::uint64_t seed) {
    return nn::train_candidate(c, public_model, cdata, seed, spec.candidate);
  };
  SearchControl control;
  control.checkpoint = dir.path("search/log.jsonl");
  control.resume = options.resume;
  control.stop_after_round = options.stop_after_round;
  fs::create_directories(dir.path("search"));
  SearchResult result = run_search(spec.ranges, spec.cost_profile, spec.arch.dims(), evaluator, spec.search, control);
  dir.record("search", "search/log.jsonl");
  dir.put("search", "search/records.csv", records_csv(result.records));
  if (result.paused) return result;

  std::ostringstream front;
  front << "key,accuracy,latency_ms,memory_bytes,score\n";
  const auto scores = score(result.front, spec.search.alpha);
  json members = json::array();
  for (std::size_t i = 0; i < result.front.records.size(); ++i) {
    const auto& r = result.front.records[i];
    front << quoted(r.config.key()) << ',' << fmt(r.objectives->accuracy) << ',' << fmt(r.objectives->latency_ms)
          << ',' << r.memory.total << ',' << fmt(scores[i]) << '\n';
    members.push_back({{"key", r.config.key()},
                       {"accuracy", r.objectives->accuracy},
                       {"latency_ms", r.objectives->latency_ms},
                       {"score", scores[i]}});
  }
  dir.put("search", "search/front.csv", front.str());
  const auto& pick = result.front.records[result.selected_index];
  const json selected = {{"configuration", to_json(*result.selected)},
                         {"key", pick.config.key()},
                         {"accuracy", pick.objectives->accuracy},
                         {"latency_ms", pick.objectives->latency_ms},
                         {"memory_bytes", pick.memory.total},
                         {"alpha", spec.search.alpha},
                         {"h_limit_bytes", spec.search.h_limit_bytes},
                         {"evaluations", result.records.size()},
                         {"hypervolume", result.hypervolume},
                         {"reference_point",
                          {{"accuracy_floor", result.front.reference_point.accuracy_floor},
                           {"latency_ceiling", result.front.reference_point.latency_ceiling}}},
                         {"front", members}};
  dir.put("search", "search/selected.json", dump(selected));
  dir.complete("search");
  return result;
}

// --- train -------------------------------------------------------------------------------------

namespace {

Configuration victim_configuration(const ExperimentSpec& spec, const RunDir& dir) {
  if (spec.victim_configuration) return *spec.victim_configuration;
  const json selected = ju::parse_file(dir.require("search", "search/selected.json").string());
  return configuration_from_json(ju::require<json>(selected, "configuration", "selected configuration"));
}

int selected_epoch(const std::vector<nn::EpochStats>& curves) {
  for (const auto& e : curves) {
    if (e.selected) return e.epoch;
  }
  return 0;
}

PoisonedRun guarded_train(RunDir& dir, const std::string& tag, const nn::ModelState& teacher,
                          const Configuration& config, const nn::DataBundle& data, const nn::TrainConfig& tc) {
  try {
    return train_victim(teacher, config, data, tc);
  } catch (const TrainingDivergence& e) {
    dir.put("train", "train/failure_" + tag + ".txt", std::string(e.what()) + "\n");
    throw;
  }
}

}  // namespace

TrainOutcome cmd_train(const ExperimentSpec& spec, const StageOptions& options) {
  RunDir dir(spec, options);
  dir.require_complete("search");
  const Configuration config = victim_configuration(spec, dir);
  const nn::ModelState public_model = get_model(dir, "search", "models/public.tnck");
  dir.begin("train");
  const nn::DataBundle data = make_experiment_data(spec);
  const nn::ModelState teacher = train_teacher(spec, public_model, data);
  put_model(dir, "train", "models/teacher.tnck", teacher,
            model_meta(spec, "teacher", {{"data", spec.data_seed}, {"fit", spec.teacher_fit.seed}}));

  nn::TrainConfig control_tc = spec.train;
  control_tc.lambda = 0.0;
  const PoisonedRun control = guarded_train(dir, "control", teacher, config, data, control_tc);
  put_model(dir, "train", "models/control.tnck", control.model,
            model_meta(spec, "control", {{"data", spec.data_seed}, {"train", control_tc.seed}}));
  dir.put("train", "train/curves_control.csv", nn::curves_to_csv(control.curves));

  const PoisonedRun victim = guarded_train(dir, "victim", teacher, config, data, spec.train);
  put_model(dir, "train", "models/victim.tnck", victim.model,
            model_meta(spec, "victim", {{"data", spec.data_seed}, {"train", spec.train.seed}}));
  dir.put("train", "train/curves.csv", nn::curves_to_csv(victim.curves));

  TrainOutcome out;
  out.public_accuracy = test_accuracy(public_model, data.test, false);
  out.teacher_accuracy = test_accuracy(teacher, data.test, false);
  out.control_combined = test_accuracy(control.model, data.test, true);
  out.control_backbone = test_accuracy(control.model, data.test, false);
  out.victim_combined = test_accuracy(victim.model, data.test, true);
  out.victim_backbone = test_accuracy(victim.model, data.test, false);
  out.selected_epoch = selected_epoch(victim.curves);
  const json metrics = {{"configuration", config.key()},
                        {"lambda", spec.train.lambda},
                        {"chance", 1.0 / spec.recipe.num_classes},
                        {"public_accuracy", out.public_accuracy},
                        {"teacher_accuracy", out.teacher_accuracy},
                        {"control_combined", out.control_combined},
                        {"control_backbone", out.control_backbone},
                        {"victim_combined", out.victim_combined},
                        {"victim_backbone", out.victim_backbone},
                        {"selected_epoch", out.selected_epoch},
                        {"tee_parameters", victim.model.tee_parameter_count()}};
  dir.put("train", "train/metrics.json", dump(metrics));
  dir.complete("train");
  return out;
}

std::vector<SweepRow> cmd_sweep(const ExperimentSpec& spec, const StageOptions& options) {
  if (spec.lambda_sweep.empty()) throw ParseError("sweep: the spec lists no lambda_sweep values");
  RunDir dir(spec, options);
  dir.require_complete("train");
  const Configuration config = victim_configuration(spec, dir);
  const nn::ModelState teacher = get_model(dir, "train", "models/teacher.tnck");
  const nn::DataBundle data = make_experiment_data(spec);
  std::vector<SweepRow> rows;
  std::ostringstream csv;
  csv << "lambda,combined_acc,backbone_acc,selected_epoch\n";
  for (double lambda : spec.lambda_sweep) {
    nn::TrainConfig tc = spec.train;
    tc.lambda = lambda;
    const PoisonedRun run = guarded_train(dir, "sweep", teacher, config, data, tc);
    SweepRow r{lambda, test_accuracy(run.model, data.test, true), test_accuracy(run.model, data.test, false)};
    csv << fmt(lambda) << ',' << fmt(r.combined) << ',' << fmt(r.backbone) << ',' << selected_epoch(run.curves) << '\n';
    rows.push_back(r);
  }
  dir.put("train", "train/sweep.csv", csv.str());
  return rows;
}

// --- attack ------------------------------------------------------------------------------------

namespace {

json scenario_summary(const std::vector<AttackReport>& reports) {
  json out = json::object();
  for (const auto& s : summarize_attacks(reports)) {
    out[exposure_name(s.scenario)] = {{"median", s.median}, {"min", s.min}, {"max", s.max}};
  }
  return out;
}

}  // namespace

AttackOutcome cmd_attack(const ExperimentSpec& spec, const StageOptions& options) {
  RunDir dir(spec, options);
  dir.require_complete("train");
  VictimBundle bundle{get_model(dir, "search", "models/public.tnck"), get_model(dir, "train", "models/teacher.tnck"),
                      get_model(dir, "train", "models/victim.tnck")};
  const nn::ModelState control_model = get_model(dir, "train", "models/control.tnck");
  dir.begin("attack");
  const nn::DataBundle data = make_experiment_data(spec);
  const AttackData ad{&data.auxiliary, &data.test, data.train.size()};
  AttackOutcome out;
  out.reports = run_attack_suite(bundle, spec.attack.scenarios, spec.attack.seeds, spec.attack.query_fraction, ad,
                                 spec.attack.settings, spec.attack.workers);
  dir.put("attack", "attack/attacks.csv", attack_reports_to_csv(out.reports));
  bundle.victim = control_model;
  out.control = run_attack_suite(bundle, {Exposure::PoisonedREE}, spec.attack.seeds, spec.attack.query_fraction, ad,
                                 spec.attack.settings, spec.attack.workers);
  dir.put("attack", "attack/control.csv", attack_reports_to_csv(out.control));
  const json summary = {{"query_count", query_count_for(spec.attack.query_fraction, data.train.size())},
                        {"query_fraction", spec.attack.query_fraction},
                        {"seeds", spec.attack.seeds},
                        {"scenarios", scenario_summary(out.reports)},
                        {"control_exposed_trunk", median([&] {
                           std::vector<double> v;
                           for (const auto& r : out.control) v.push_back(r.surrogate_accuracy);
                           return v;
                         }())}};
  dir.put("attack", "attack/summary.json", dump(summary));
  dir.complete("attack");
  return out;
}

// --- report ------------------------------------------------------------------------------------

namespace {

std::optional<double> scenario_median(const json& attack, const char* name) {
  const json& s = attack.at("scenarios");
  if (!s.contains(name)) return std::nullopt;
  return s.at(name).at("median").get<double>();
}

std::string pass(bool ok) { return ok ? "PASS" : "FAIL"; }

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

json cmd_report(const ExperimentSpec& spec, const StageOptions& options) {
  RunDir dir(spec, options);
  std::vector<std::string> missing;
  for (const char* stage : {"profile", "search", "train", "attack"}) {
    const StageRecord* r = dir.manifest().stage(stage);
    if (!r || !r->complete) missing.emplace_back(stage);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw MissingArtifact("incomplete run, missing stages: " + list);
  }
  const json profile = ju::parse_file(dir.require("profile", "profile/summary.json").string());
  const json selected = ju::parse_file(dir.require("search", "search/selected.json").string());
  const json metrics = ju::parse_file(dir.require("train", "train/metrics.json").string());
  const json attack = ju::parse_file(dir.require("attack", "attack/summary.json").string());

  const Configuration victim_config = victim_configuration(spec, dir);
  const BackboneDims dims = spec.arch.dims();
  const double backbone_ms = spec.cost_profile.backbone_ms();
  const double victim_ms = parallel_latency(victim_config, spec.cost_profile, dims);
  const int L = spec.ranges.num_blocks;
  const double sequential_ms =
      sequential_baseline_latency(L - std::max(1, victim_config.active_count()), spec.cost_profile, dims);
  const double full_tee_ms = sequential_baseline_latency(0, spec.cost_profile, dims);

  AcceptanceFlags flags;
  flags.latency_lower_bound = profile.at("lower_bound_holds").get<bool>() && victim_ms >= backbone_ms &&
                              selected.at("latency_ms").get<double>() >= backbone_ms;
  const double chance = metrics.at("chance").get<double>();
  flags.accuracy_tolerance =
      metrics.at("victim_combined").get<double>() >= metrics.at("control_combined").get<double>() - 0.03;
  flags.backbone_poisoned = metrics.at("victim_backbone").get<double>() <= chance + 0.15;
  const auto none = scenario_median(attack, "NoShield");
  const auto black = scenario_median(attack, "BlackBox");
  const auto poisoned = scenario_median(attack, "PoisonedREE");
  flags.attack_ordering = none && black && poisoned && *poisoned < *black && *black < *none;
  flags.control_leakage = black && attack.at("control_exposed_trunk").get<double>() >= *black;

  json artifacts = json::object();
  for (const auto& [stage, rec] : dir.manifest().stages) {
    if (stage == "report") continue;
    for (const auto& [rel, digest] : rec.artifacts) artifacts[rel] = digest;
  }
  json doc = ju::schema_header("teenas.summary", 1);
  doc["tool_version"] = kToolVersion;
  doc["spec_digest"] = dir.manifest().spec_digest;
  doc["artifacts"] = artifacts;
  doc["search"] = selected;
  doc["latency"] = {{"backbone_ms", backbone_ms},
                    {"victim_parallel_ms", victim_ms},
                    {"sequential_matched_ms", sequential_ms},
                    {"full_tee_ms", full_tee_ms},
                    {"profile", profile}};
  doc["accuracy"] = metrics;
  doc["attack"] = attack;
  doc["flags"] = {{"latency_lower_bound", flags.latency_lower_bound},
                  {"accuracy_tolerance", flags.accuracy_tolerance},
                  {"backbone_poisoned", flags.backbone_poisoned},
                  {"attack_ordering", flags.attack_ordering},
                  {"control_leakage", flags.control_leakage}};

  std::ostringstream txt;
  txt << "teenas run summary (tool " << kToolVersion << ")\n"
      << "spec digest " << dir.manifest().spec_digest << "\n\n"
      << "search: alpha " << spec.search.alpha << ", memory limit " << spec.search.h_limit_bytes << " bytes, "
      << selected.at("evaluations").get<int>() << " evaluations, hypervolume "
      << fixed(selected.at("hypervolume").get<double>()) << "\n"
      << "  front:\n";
  for (const auto& m : selected.at("front")) {
    txt << "    " << m.at("key").get<std::string>() << "  acc " << fixed(m.at("accuracy").get<double>()) << "  latency "
        << fixed(m.at("latency_ms").get<double>()) << " ms\n";
  }
  txt << "  selected: " << selected.at("key").get<std::string>() << "\n\n"
      << "latency (ms): backbone " << fixed(backbone_ms) << ", victim parallel " << fixed(victim_ms)
      << ", sequential matched " << fixed(sequential_ms) << ", full TEE " << fixed(full_tee_ms) << "\n"
      << "  profile rows " << profile.at("rows").get<int>() << ", max oracle gap "
      << profile.at("max_oracle_gap_ms").get<double>() << " ms\n\n"
      << "accuracy (test): public " << fixed(metrics.at("public_accuracy").get<double>()) << ", teacher "
      << fixed(metrics.at("teacher_accuracy").get<double>()) << "\n"
      << "  lambda 0     combined " << fixed(metrics.at("control_combined").get<double>()) << "  backbone "
      << fixed(metrics.at("control_backbone").get<double>()) << "\n"
      << "  lambda " << metrics.at("lambda").get<double>() << "  combined "
      << fixed(metrics.at("victim_combined").get<double>()) << "  backbone "
      << fixed(metrics.at("victim_backbone").get<double>()) << "\n\n"
      << "attack (" << attack.at("query_count").get<int>() << " queries, median surrogate accuracy):\n";
  for (const char* name : {"NoShield", "BlackBox", "PoisonedREE"}) {
    if (const auto m = scenario_median(attack, name)) txt << "  " << name << "  " << fixed(*m) << "\n";
  }
  txt << "  lambda 0 trunk exposed  " << fixed(attack.at("control_exposed_trunk").get<double>()) << "\n\n"
      << "checks:\n"
      << "  " << pass(flags.latency_lower_bound) << "  latency lower bound\n"
      << "  " << pass(flags.accuracy_tolerance) << "  combined accuracy within 3 points of lambda 0\n"
      << "  " << pass(flags.backbone_poisoned) << "  standalone backbone at most chance + 15 points\n"
      << "  " << pass(flags.attack_ordering) << "  PoisonedREE < BlackBox < NoShield\n"
      << "  " << pass(flags.control_leakage) << "  lambda 0 exposed trunk >= BlackBox\n"
      << "\nartifacts:\n";
  for (const auto& [rel, digest] : artifacts.items()) txt << "  " << digest.get<std::string>() << "  " << rel << "\n";

  dir.begin("report");
  dir.put("report", "summary.json", dump(doc));
  dir.put("report", "summary.txt", txt.str());
  dir.complete("report");
  return doc;
}

json run_pipeline(const ExperimentSpec& spec, const StageOptions& options) {
  cmd_profile(spec, options);
  StageOptions search_options = options;
  const SearchResult r = cmd_search(spec, search_options);
  if (r.paused) return json{{"paused_after_round", r.completed_rounds}};
  StageOptions rest = options;
  rest.resume = false;
  rest.stop_after_round.reset();
  cmd_train(spec, rest);
  cmd_attack(spec, rest);
  return cmd_report(spec, rest);
}

}  // namespace teenas

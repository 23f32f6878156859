// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "teenas/json_util.hpp"
#include "teenas/latency.hpp"
#include "teenas/nn/model.hpp"
#include "teenas/pareto.hpp"
#include "teenas/pipeline.hpp"
#include "teenas/search_space.hpp"

namespace py = pybind11;
using namespace teenas;

namespace {

// JSON crosses the boundary as text; the Python side wraps it with json.loads.
template <typename T>
std::string dumps(const T& v) {
  return to_json(v).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "TEE sub-network search: search space, latency model, Pareto tools and the pipeline stages";
  m.attr("__version__") = kToolVersion;

  py::enum_<OpType>(m, "OpType")
      .value("Inactive", OpType::Inactive)
      .value("SpatialMixing", OpType::SpatialMixing)
      .value("ChannelMixing", OpType::ChannelMixing);

  py::class_<BlockSpec>(m, "BlockSpec")
      .def(py::init<>())
      .def(py::init([](OpType t, int sd, int cd, int sh, int ch) { return BlockSpec{t, sd, cd, sh, ch}; }),
           py::arg("op_type"), py::arg("spatial_down") = 0, py::arg("channel_down") = 0,
           py::arg("spatial_hidden") = 0, py::arg("channel_hidden") = 0)
      .def_readwrite("op_type", &BlockSpec::op_type)
      .def_readwrite("spatial_down", &BlockSpec::spatial_down)
      .def_readwrite("channel_down", &BlockSpec::channel_down)
      .def_readwrite("spatial_hidden", &BlockSpec::spatial_hidden)
      .def_readwrite("channel_hidden", &BlockSpec::channel_hidden)
      .def_property_readonly("active", &BlockSpec::active);

  py::class_<Configuration>(m, "Configuration")
      .def(py::init<>())
      .def_readwrite("spatial_up", &Configuration::spatial_up)
      .def_readwrite("channel_up", &Configuration::channel_up)
      .def_readwrite("blocks", &Configuration::blocks)
      .def("active_count", &Configuration::active_count)
      .def("transfer_points", &Configuration::transfer_points)
      .def("key", &Configuration::key)
      .def("to_json", [](const Configuration& c) { return dumps(c); })
      .def_static("from_json", [](const std::string& text) {
        return configuration_from_json(json_util::parse(text, "configuration"));
      })
      .def("__eq__", [](const Configuration& a, const Configuration& b) { return a == b; })
      .def("__repr__", [](const Configuration& c) { return "<Configuration " + c.key() + ">"; });

  py::class_<SearchFactorRanges>(m, "SearchFactorRanges")
      .def(py::init<>())
      .def_readwrite("su_choices", &SearchFactorRanges::su_choices)
      .def_readwrite("cu_choices", &SearchFactorRanges::cu_choices)
      .def_readwrite("type_choices", &SearchFactorRanges::type_choices)
      .def_readwrite("sd_choices", &SearchFactorRanges::sd_choices)
      .def_readwrite("cd_choices", &SearchFactorRanges::cd_choices)
      .def_readwrite("sh_choices", &SearchFactorRanges::sh_choices)
      .def_readwrite("ch_choices", &SearchFactorRanges::ch_choices)
      .def_readwrite("num_blocks", &SearchFactorRanges::num_blocks)
      .def("encoded_dim", &SearchFactorRanges::encoded_dim)
      .def_static("from_json",
                  [](const std::string& text) { return ranges_from_json(json_util::parse(text, "ranges")); });

  py::class_<CostProfile>(m, "CostProfile")
      .def(py::init<>())
      .def_readwrite("gpu_block_ms", &CostProfile::gpu_block_ms)
      .def_readwrite("adapter_ms", &CostProfile::adapter_ms)
      .def_readwrite("transfer_base_ms", &CostProfile::transfer_base_ms)
      .def_readwrite("transfer_bandwidth_bytes_per_ms", &CostProfile::transfer_bandwidth_bytes_per_ms)
      .def_readwrite("tee_ms_per_mac", &CostProfile::tee_ms_per_mac)
      .def_readwrite("tee_block_overhead_ms", &CostProfile::tee_block_overhead_ms)
      .def_readwrite("classifier_ms", &CostProfile::classifier_ms)
      .def_readwrite("cpu_slowdown", &CostProfile::cpu_slowdown)
      .def("backbone_ms", &CostProfile::backbone_ms)
      .def_static("from_json", [](const std::string& text) {
        return cost_profile_from_json(json_util::parse(text, "cost profile"));
      });

  py::class_<BlockDims>(m, "BlockDims")
      .def(py::init([](int r, int c) { return BlockDims{r, c}; }), py::arg("resolution"), py::arg("channels"))
      .def_readwrite("resolution", &BlockDims::resolution)
      .def_readwrite("channels", &BlockDims::channels);

  py::class_<BackboneDims>(m, "BackboneDims")
      .def(py::init<>())
      .def_readwrite("blocks", &BackboneDims::blocks)
      .def_readwrite("num_classes", &BackboneDims::num_classes);

  m.def("default_backbone_dims", [] { return nn::BackboneArch{}.dims(); },
        "Block geometry of the default desk-scale backbone");

  py::class_<MemoryFootprint>(m, "MemoryFootprint")
      .def_readonly("parameter_bytes", &MemoryFootprint::parameter_bytes)
      .def_readonly("peak_activation_bytes", &MemoryFootprint::peak_activation_bytes)
      .def_readonly("total", &MemoryFootprint::total);

  m.def("validate", [](const Configuration& c, const SearchFactorRanges& r) { return validate(c, r).violation; },
        "Empty string when valid, otherwise the first violated field");
  m.def("encode", &encode);
  m.def("decode", [](const std::vector<double>& x, const SearchFactorRanges& r) { return decode(x, r); });
  m.def("sample_random",
        [](const SearchFactorRanges& r, std::uint64_t seed) { return sample_random(r, seed); });
  m.def("empty_configuration", &empty_configuration);
  m.def("estimate_memory", &estimate_memory);
  m.def("subnetwork_weight_count", &subnetwork_weight_count);

  m.def("parallel_latency", &parallel_latency, py::arg("config"), py::arg("profile"), py::arg("dims"));
  m.def(
      "simulate_schedule",
      [](const Configuration& c, const CostProfile& p, const BackboneDims& d) {
        const ScheduleTrace t = simulate_schedule(c, p, d);
        py::list events;
        for (const auto& e : t.events) {
          events.append(py::make_tuple(resource_name(e.resource), e.label, e.start_ms, e.end_ms));
        }
        return py::make_tuple(t.makespan_ms, events);
      },
      "(makespan_ms, [(resource, label, start_ms, end_ms), ...])");
  m.def("sequential_baseline_latency", &sequential_baseline_latency);

  m.def(
      "non_dominated_indices",
      [](const std::vector<std::pair<double, double>>& pts) {
        std::vector<ObjectivePoint> p;
        for (const auto& [a, l] : pts) p.push_back({a, l});
        return non_dominated_indices(p);
      },
      "Indices of the (accuracy, latency) pairs no other pair dominates");
  m.def(
      "hypervolume",
      [](const std::vector<std::pair<double, double>>& pts, double accuracy_floor, double latency_ceiling) {
        std::vector<ObjectivePoint> p;
        for (const auto& [a, l] : pts) p.push_back({a, l});
        return hypervolume(p, ReferencePoint{accuracy_floor, latency_ceiling});
      },
      py::arg("points"), py::arg("accuracy_floor"), py::arg("latency_ceiling"));

  m.def(
      "load_experiment", [](const std::string& path) { return to_json(load_experiment(path)).dump(); },
      "Canonical JSON of a validated experiment spec");
  m.def(
      "run_stage",
      [](const std::string& stage, const std::string& spec_path, const std::string& out) {
        const ExperimentSpec spec = load_experiment(spec_path);
        StageOptions o;
        if (!out.empty()) o.out_override = out;
        py::gil_scoped_release release;
        if (stage == "profile") {
          cmd_profile(spec, o);
        } else if (stage == "search") {
          cmd_search(spec, o);
        } else if (stage == "train") {
          cmd_train(spec, o);
        } else if (stage == "attack") {
          cmd_attack(spec, o);
        } else if (stage == "report") {
          cmd_report(spec, o);
        } else if (stage == "run") {
          run_pipeline(spec, o);
        } else {
          throw std::invalid_argument("unknown stage '" + stage + "'");
        }
      },
      py::arg("stage"), py::arg("spec"), py::arg("out") = "");

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<OracleMismatch>(m, "OracleMismatch");
  py::register_exception<EmptyFront>(m, "EmptyFront");
  py::register_exception<TrainingDivergence>(m, "TrainingDivergence");
  py::register_exception<MissingArtifact>(m, "MissingArtifact", PyExc_FileNotFoundError);
}

// SPDX-License-Identifier: Apache-2.0
//
// Bi-objective bookkeeping: maximize accuracy, minimize latency.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "teenas/search_space.hpp"

namespace teenas {

struct ObjectivePoint {
  double accuracy = 0.0;
  double latency_ms = 0.0;
};

/// a dominates b: no worse in both objectives and strictly better in one.
bool dominates(const ObjectivePoint& a, const ObjectivePoint& b);

struct ReferencePoint {
  double accuracy_floor = 0.0;
  double latency_ceiling = 0.0;
};

struct EvaluationRecord {
  int index = 0;  // evaluation order
  int round = 0;  // 0 = initial design, 1.. = acquisition rounds
  Configuration config;
  std::vector<double> encoded;
  std::optional<ObjectivePoint> objectives;  // empty when infeasible or failed
  MemoryFootprint memory;
  bool feasible = false;
  bool failed = false;
  std::uint64_t epoch_seed = 0;

  [[nodiscard]] bool usable() const { return feasible && !failed && objectives.has_value(); }
};

struct ParetoFront {
  std::vector<EvaluationRecord> records;
  ReferencePoint reference_point;

  [[nodiscard]] bool empty() const { return records.empty(); }
  [[nodiscard]] std::vector<ObjectivePoint> points() const;
};

/// Indices of the non-dominated points, ascending. Exact duplicates keep the first.
std::vector<std::size_t> non_dominated_indices(std::span<const ObjectivePoint> points);

/// Non-dominated subset of the usable records, in evaluation order. An empty
/// result is the empty-front verdict.
ParetoFront pareto_front(std::span<const EvaluationRecord> records, ReferencePoint reference = {});

/// Exact 2-D dominated hypervolume. Throws std::invalid_argument if a point
/// falls outside the reference box.
double hypervolume(std::span<const ObjectivePoint> points, const ReferencePoint& reference);
double hypervolume(const ParetoFront& front);

/// Same sweep, but points are clipped to the reference box (outside points add nothing).
double hypervolume_clipped(std::span<const ObjectivePoint> points, const ReferencePoint& reference);

/// Min-Max normalized weighted score per front member.
std::vector<double> score(const ParetoFront& front, double alpha);

/// Index into front.records of the best-scoring member. Ties (within 1e-12)
/// go to higher accuracy, then lower latency, then earlier evaluation.
std::size_t select_optimal_index(const ParetoFront& front, double alpha);
Configuration select_optimal(const ParetoFront& front, double alpha);

}  // namespace teenas

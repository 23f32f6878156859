// SPDX-License-Identifier: Apache-2.0
#include "teenas/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace teenas {

bool dominates(const ObjectivePoint& a, const ObjectivePoint& b) {
  return a.accuracy >= b.accuracy && a.latency_ms <= b.latency_ms &&
         (a.accuracy > b.accuracy || a.latency_ms < b.latency_ms);
}

std::vector<ObjectivePoint> ParetoFront::points() const {
  std::vector<ObjectivePoint> pts;
  pts.reserve(records.size());
  for (const auto& r : records) pts.push_back(*r.objectives);
  return pts;
}

std::vector<std::size_t> non_dominated_indices(std::span<const ObjectivePoint> points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (points[i].accuracy != points[j].accuracy) return points[i].accuracy > points[j].accuracy;
    if (points[i].latency_ms != points[j].latency_ms) return points[i].latency_ms < points[j].latency_ms;
    return i < j;
  });
  // Sweeping in accuracy-descending order, a point survives only if it beats
  // every faster-or-equal latency seen so far.
  std::vector<std::size_t> kept;
  double best_latency = INFINITY;
  for (std::size_t i : order) {
    if (points[i].latency_ms < best_latency) {
      kept.push_back(i);
      best_latency = points[i].latency_ms;
    }
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

ParetoFront pareto_front(std::span<const EvaluationRecord> records, ReferencePoint reference) {
  std::vector<const EvaluationRecord*> usable;
  for (const auto& r : records) {
    if (r.usable()) usable.push_back(&r);
  }
  std::vector<ObjectivePoint> pts;
  pts.reserve(usable.size());
  for (const auto* r : usable) pts.push_back(*r->objectives);
  ParetoFront front;
  front.reference_point = reference;
  for (std::size_t i : non_dominated_indices(pts)) front.records.push_back(*usable[i]);
  return front;
}

namespace {

double sweep(std::vector<ObjectivePoint> pts, const ReferencePoint& ref) {
  std::sort(pts.begin(), pts.end(),
            [](const ObjectivePoint& a, const ObjectivePoint& b) { return a.accuracy > b.accuracy; });
  double volume = 0.0;
  double min_latency = ref.latency_ceiling;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    min_latency = std::min(min_latency, pts[i].latency_ms);
    const double next = i + 1 < pts.size() ? pts[i + 1].accuracy : ref.accuracy_floor;
    volume += (pts[i].accuracy - next) * (ref.latency_ceiling - min_latency);
  }
  return volume;
}

}  // namespace

double hypervolume(std::span<const ObjectivePoint> points, const ReferencePoint& reference) {
  for (const auto& p : points) {
    if (!(p.accuracy >= reference.accuracy_floor && p.latency_ms <= reference.latency_ceiling)) {
      throw std::invalid_argument("hypervolume: point does not dominate the reference point");
    }
  }
  return sweep({points.begin(), points.end()}, reference);
}

double hypervolume(const ParetoFront& front) {
  const auto pts = front.points();
  return hypervolume(pts, front.reference_point);
}

double hypervolume_clipped(std::span<const ObjectivePoint> points, const ReferencePoint& reference) {
  std::vector<ObjectivePoint> inside;
  inside.reserve(points.size());
  for (const auto& p : points) {
    if (p.accuracy > reference.accuracy_floor && p.latency_ms < reference.latency_ceiling) inside.push_back(p);
  }
  return sweep(std::move(inside), reference);
}

std::vector<double> score(const ParetoFront& front, double alpha) {
  if (front.empty()) return {};
  double fmin = INFINITY, fmax = -INFINITY, gmin = INFINITY, gmax = -INFINITY;
  for (const auto& r : front.records) {
    fmin = std::min(fmin, r.objectives->accuracy);
    fmax = std::max(fmax, r.objectives->accuracy);
    gmin = std::min(gmin, r.objectives->latency_ms);
    gmax = std::max(gmax, r.objectives->latency_ms);
  }
  std::vector<double> s;
  s.reserve(front.records.size());
  for (const auto& r : front.records) {
    // Zero spread: the lone value counts as the best on that axis.
    const double f = fmax > fmin ? (r.objectives->accuracy - fmin) / (fmax - fmin) : 1.0;
    const double g = gmax > gmin ? (r.objectives->latency_ms - gmin) / (gmax - gmin) : 0.0;
    s.push_back(alpha * f + (1.0 - alpha) * (1.0 - g));
  }
  return s;
}

std::size_t select_optimal_index(const ParetoFront& front, double alpha) {
  if (front.empty()) throw std::invalid_argument("select_optimal: empty front");
  constexpr double kTieTolerance = 1e-12;
  const auto s = score(front, alpha);
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const auto& a = *front.records[i].objectives;
    const auto& b = *front.records[best].objectives;
    if (s[i] > s[best] + kTieTolerance) {
      best = i;
    } else if (std::abs(s[i] - s[best]) <= kTieTolerance) {
      if (a.accuracy > b.accuracy ||
          (a.accuracy == b.accuracy && a.latency_ms < b.latency_ms) ||
          (a.accuracy == b.accuracy && a.latency_ms == b.latency_ms &&
           front.records[i].index < front.records[best].index)) {
        best = i;
      }
    }
  }
  return best;
}

Configuration select_optimal(const ParetoFront& front, double alpha) {
  return front.records[select_optimal_index(front, alpha)].config;
}

}  // namespace teenas

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>

#include "teenas/pareto.hpp"

using namespace teenas;

namespace {

std::vector<std::size_t> brute_front(const std::vector<ObjectivePoint>& pts) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < pts.size() && keep; ++j) {
      if (j == i) continue;
      const bool dom = pts[j].accuracy >= pts[i].accuracy && pts[j].latency_ms <= pts[i].latency_ms &&
                       (pts[j].accuracy > pts[i].accuracy || pts[j].latency_ms < pts[i].latency_ms);
      const bool earlier_twin = j < i && pts[j].accuracy == pts[i].accuracy && pts[j].latency_ms == pts[i].latency_ms;
      if (dom || earlier_twin) keep = false;
    }
    if (keep) out.push_back(i);
  }
  return out;
}

EvaluationRecord record(int index, double acc, double lat) {
  EvaluationRecord r;
  r.index = index;
  r.feasible = true;
  r.objectives = ObjectivePoint{acc, lat};
  return r;
}

}  // namespace

TEST_CASE("dominance") {
  CHECK(dominates({0.9, 1.0}, {0.8, 1.0}));
  CHECK(dominates({0.9, 1.0}, {0.9, 2.0}));
  CHECK_FALSE(dominates({0.9, 1.0}, {0.9, 1.0}));
  CHECK_FALSE(dominates({0.9, 2.0}, {0.8, 1.0}));
}

TEST_CASE("front matches brute force, including ties on a coarse grid") {
  Rng rng = make_rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ObjectivePoint> pts(60);
    for (auto& p : pts) {
      p.accuracy = static_cast<double>(uniform_index(rng, 8)) / 8.0;
      p.latency_ms = static_cast<double>(uniform_index(rng, 8));
    }
    CHECK(non_dominated_indices(pts) == brute_front(pts));
  }
}

TEST_CASE("hypervolume of hand-sized fronts") {
  const ReferencePoint ref{0.0, 10.0};
  CHECK(hypervolume(std::vector<ObjectivePoint>{}, ref) == 0.0);
  CHECK(hypervolume(std::vector<ObjectivePoint>{{0.5, 4.0}}, ref) == doctest::Approx(3.0));
  // Staircase: [0,0.5]x[4,10] union [0,0.8]x[7,10] = 3 + 0.3*3.
  const std::vector<ObjectivePoint> two{{0.5, 4.0}, {0.8, 7.0}};
  CHECK(hypervolume(two, ref) == doctest::Approx(3.9));
  // Dominated points add nothing.
  const std::vector<ObjectivePoint> three{{0.5, 4.0}, {0.8, 7.0}, {0.4, 5.0}};
  CHECK(hypervolume(three, ref) == doctest::Approx(3.9));
  CHECK_THROWS_AS(hypervolume(std::vector<ObjectivePoint>{{0.5, 11.0}}, ref), std::invalid_argument);
  CHECK(hypervolume_clipped(std::vector<ObjectivePoint>{{0.5, 11.0}, {0.5, 4.0}}, ref) == doctest::Approx(3.0));
}

TEST_CASE("hypervolume equals a grid-count oracle") {
  Rng rng = make_rng(4);
  const ReferencePoint ref{0.0, 1.0};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ObjectivePoint> pts(12);
    for (auto& p : pts) {
      p.accuracy = static_cast<double>(uniform_index(rng, 20) + 1) / 20.0;
      p.latency_ms = static_cast<double>(uniform_index(rng, 20)) / 20.0;
    }
    // Cells of a 20x20 grid are either fully dominated or not.
    int covered = 0;
    for (int i = 0; i < 20; ++i) {
      for (int j = 0; j < 20; ++j) {
        const double a = (i + 0.5) / 20.0;
        const double l = (j + 0.5) / 20.0;
        covered += std::any_of(pts.begin(), pts.end(),
                               [&](const ObjectivePoint& p) { return p.accuracy >= a && p.latency_ms <= l; });
      }
    }
    CHECK(hypervolume(pts, ref) == doctest::Approx(covered / 400.0).epsilon(1e-12));
  }
}

TEST_CASE("pareto_front keeps usable records only") {
  std::vector<EvaluationRecord> recs{record(0, 0.5, 4.0), record(1, 0.8, 7.0), record(2, 0.4, 5.0)};
  EvaluationRecord infeasible = record(3, 0.99, 0.1);
  infeasible.feasible = false;
  recs.push_back(infeasible);
  EvaluationRecord failed = record(4, 0.99, 0.1);
  failed.failed = true;
  recs.push_back(failed);
  const ParetoFront f = pareto_front(recs, {0.0, 10.0});
  REQUIRE(f.records.size() == 2);
  CHECK(f.records[0].index == 0);
  CHECK(f.records[1].index == 1);
  CHECK(pareto_front(std::vector<EvaluationRecord>{infeasible}).empty());
}

TEST_CASE("weighted selection") {
  std::vector<EvaluationRecord> recs{record(0, 0.6, 1.0), record(1, 0.8, 2.0), record(2, 0.9, 5.0)};
  const ParetoFront f = pareto_front(recs, {0.0, 10.0});
  // alpha 1 -> most accurate; alpha 0 -> fastest.
  CHECK(select_optimal_index(f, 1.0) == 2);
  CHECK(select_optimal_index(f, 0.0) == 0);
  // alpha 0.5: scores 0.5, (2/3 + 3/4)/2, 0.5
  const auto s = score(f, 0.5);
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx((2.0 / 3.0 + 0.75) / 2.0));
  CHECK(s[2] == doctest::Approx(0.5));
  CHECK(select_optimal_index(f, 0.5) == 1);
  // Tie between 0 and 2 at alpha 0.5 if 1 is removed: the more accurate wins.
  const ParetoFront two = pareto_front(std::vector<EvaluationRecord>{recs[0], recs[2]}, {0.0, 10.0});
  CHECK(two.records[select_optimal_index(two, 0.5)].index == 2);
  CHECK_THROWS_AS(select_optimal_index(ParetoFront{}, 0.5), std::invalid_argument);
}

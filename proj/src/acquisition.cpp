// SPDX-License-Identifier: Apache-2.0
#include "teenas/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "teenas/error.hpp"
#include "teenas/rng.hpp"

namespace teenas {
namespace {

// Non-dominated points sorted by accuracy descending (latency then ascends strictly).
std::vector<ObjectivePoint> sorted_front(std::span<const ObjectivePoint> pts, const ReferencePoint& ref) {
  std::vector<ObjectivePoint> inside;
  inside.reserve(pts.size());
  for (const auto& p : pts) {
    if (p.accuracy > ref.accuracy_floor && p.latency_ms < ref.latency_ceiling) inside.push_back(p);
  }
  std::sort(inside.begin(), inside.end(), [](const ObjectivePoint& a, const ObjectivePoint& b) {
    return a.accuracy != b.accuracy ? a.accuracy > b.accuracy : a.latency_ms < b.latency_ms;
  });
  std::vector<ObjectivePoint> front;
  double best = INFINITY;
  for (const auto& p : inside) {
    if (p.latency_ms < best) {
      front.push_back(p);
      best = p.latency_ms;
    }
  }
  return front;
}

// Box dominated by y minus its overlap with the (sorted, non-dominated) front.
// Clipping the front to y's box preserves the accuracy ordering.
double hvi_sorted(const std::vector<ObjectivePoint>& front, const ObjectivePoint& y, const ReferencePoint& ref) {
  if (!(y.accuracy > ref.accuracy_floor && y.latency_ms < ref.latency_ceiling)) return 0.0;
  const double box = (y.accuracy - ref.accuracy_floor) * (ref.latency_ceiling - y.latency_ms);
  double overlap = 0.0;
  double min_latency = ref.latency_ceiling;
  for (std::size_t i = 0; i < front.size(); ++i) {
    const double a = std::min(front[i].accuracy, y.accuracy);
    min_latency = std::min(min_latency, std::max(front[i].latency_ms, y.latency_ms));
    const double next = i + 1 < front.size() ? std::min(front[i + 1].accuracy, y.accuracy) : ref.accuracy_floor;
    overlap += (a - next) * (ref.latency_ceiling - min_latency);
  }
  return std::max(0.0, box - overlap);
}

Eigen::MatrixXd jittered_cholesky(Eigen::MatrixXd S) {
  const Eigen::Index m = S.rows();
  if (m == 0) return S;
  const double scale = std::max(S.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  S = 0.5 * (S + S.transpose());
  for (double j = 1e-12; j <= 1.0; j *= 10.0) {
    Eigen::MatrixXd T = S;
    T.diagonal().array() += j * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(T);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalError("nehvi: baseline posterior covariance is not positive definite");
}

// Per-objective pieces of the joint (baseline, candidate) posterior:
// candidate draw = mean + w^T z_baseline + sd * z_candidate.
struct ObjectiveDraws {
  Eigen::VectorXd baseline_mean;
  Eigen::MatrixXd baseline_chol;  // m x m
  Eigen::VectorXd cand_mean;      // c
  Eigen::MatrixXd cand_w;         // c x m
  Eigen::VectorXd cand_sd;        // c
};

ObjectiveDraws prepare(const GPSurrogate& gp, const Eigen::MatrixXd& candidates, const Eigen::MatrixXd& baseline) {
  ObjectiveDraws out;
  const Eigen::Index m = baseline.rows();
  const Eigen::Index c = candidates.rows();
  const double scale2 = gp.target_scale() * gp.target_scale();
  Eigen::MatrixXd cov;
  if (m > 0) {
    gp.posterior(baseline, out.baseline_mean, cov);
    out.baseline_chol = jittered_cholesky(cov);
  } else {
    out.baseline_mean.resize(0);
    out.baseline_chol.resize(0, 0);
  }
  Eigen::MatrixXd VF(gp.size(), m);
  for (Eigen::Index j = 0; j < m; ++j) VF.col(j) = gp.whitened(baseline.row(j).transpose());

  out.cand_mean.resize(c);
  out.cand_w.resize(c, m);
  out.cand_sd.resize(c);
  for (Eigen::Index i = 0; i < c; ++i) {
    const Eigen::VectorXd x = candidates.row(i).transpose();
    const Eigen::VectorXd v = gp.whitened(x);
    const GPPrediction pred = gp.predict(x);
    out.cand_mean[i] = pred.mean;
    double var = pred.variance;
    if (m > 0) {
      Eigen::VectorXd cross(m);
      for (Eigen::Index j = 0; j < m; ++j) {
        cross[j] = (gp.kernel(x, baseline.row(j).transpose()) - v.dot(VF.col(j))) * scale2;
      }
      const Eigen::VectorXd w = out.baseline_chol.triangularView<Eigen::Lower>().solve(cross);
      out.cand_w.row(i) = w.transpose();
      var -= w.squaredNorm();
    }
    out.cand_sd[i] = std::sqrt(std::max(0.0, var));
  }
  return out;
}

}  // namespace

double hypervolume_improvement(std::span<const ObjectivePoint> front, const ObjectivePoint& candidate,
                               const ReferencePoint& reference) {
  return hvi_sorted(sorted_front(front, reference), candidate, reference);
}

std::vector<double> nehvi_acquisition(const GPSurrogate& gp_accuracy, const GPSurrogate& gp_latency,
                                      const Eigen::MatrixXd& candidates, const Eigen::MatrixXd& baseline,
                                      const ReferencePoint& reference, int mc_samples, std::uint64_t seed) {
  if (!gp_accuracy.fitted() || !gp_latency.fitted()) throw std::invalid_argument("nehvi: surrogate not fitted");
  if (candidates.rows() == 0) throw std::invalid_argument("nehvi: empty candidate set");
  if (candidates.cols() != gp_accuracy.dim() || candidates.cols() != gp_latency.dim() ||
      (baseline.rows() > 0 && baseline.cols() != candidates.cols())) {
    throw std::invalid_argument("nehvi: dimension mismatch");
  }
  if (mc_samples < 1) throw std::invalid_argument("nehvi: mc_samples must be >= 1");

  const ObjectiveDraws f = prepare(gp_accuracy, candidates, baseline);
  const ObjectiveDraws g = prepare(gp_latency, candidates, baseline);
  const Eigen::Index m = baseline.rows();
  const Eigen::Index c = candidates.rows();

  Rng rng = make_rng(seed, 0xe4f1);
  std::vector<double> scores(static_cast<std::size_t>(c), 0.0);
  Eigen::VectorXd zf(m), zg(m);
  std::vector<ObjectivePoint> draws(static_cast<std::size_t>(m));
  for (int s = 0; s < mc_samples; ++s) {
    for (Eigen::Index j = 0; j < m; ++j) zf[j] = standard_normal(rng);
    for (Eigen::Index j = 0; j < m; ++j) zg[j] = standard_normal(rng);
    const double zcf = standard_normal(rng);
    const double zcg = standard_normal(rng);
    if (m > 0) {
      const Eigen::VectorXd bf = f.baseline_mean + f.baseline_chol.triangularView<Eigen::Lower>() * zf;
      const Eigen::VectorXd bg = g.baseline_mean + g.baseline_chol.triangularView<Eigen::Lower>() * zg;
      for (Eigen::Index j = 0; j < m; ++j) draws[static_cast<std::size_t>(j)] = {bf[j], bg[j]};
    }
    const auto front = sorted_front(draws, reference);
    for (Eigen::Index i = 0; i < c; ++i) {
      double a = f.cand_mean[i] + f.cand_sd[i] * zcf;
      double l = g.cand_mean[i] + g.cand_sd[i] * zcg;
      if (m > 0) {
        a += f.cand_w.row(i).dot(zf);
        l += g.cand_w.row(i).dot(zg);
      }
      scores[static_cast<std::size_t>(i)] += hvi_sorted(front, {a, l}, reference);
    }
  }
  for (auto& s : scores) s /= static_cast<double>(mc_samples);
  return scores;
}

std::vector<double> nehvi_acquisition(const GPSurrogate& gp_accuracy, const GPSurrogate& gp_latency,
                                      const Eigen::MatrixXd& candidates, const ParetoFront& front,
                                      const ReferencePoint& reference, int mc_samples, std::uint64_t seed) {
  Eigen::MatrixXd baseline(static_cast<Eigen::Index>(front.records.size()), candidates.cols());
  for (std::size_t i = 0; i < front.records.size(); ++i) {
    const auto& e = front.records[i].encoded;
    if (static_cast<Eigen::Index>(e.size()) != candidates.cols()) throw std::invalid_argument("nehvi: front encoding dimension mismatch");
    baseline.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(e.data(), candidates.cols());
  }
  return nehvi_acquisition(gp_accuracy, gp_latency, candidates, baseline, reference, mc_samples, seed);
}

double expected_hvi_monte_carlo(std::span<const ObjectivePoint> front, const ReferencePoint& reference,
                                double accuracy_mean, double accuracy_sd, double latency_mean, double latency_sd,
                                int mc_samples, std::uint64_t seed) {
  if (mc_samples < 1) throw std::invalid_argument("expected_hvi_monte_carlo: mc_samples must be >= 1");
  const auto sorted = sorted_front(front, reference);
  Rng rng = make_rng(seed, 0xe4f1);
  double total = 0.0;
  for (int s = 0; s < mc_samples; ++s) {
    const double a = accuracy_mean + accuracy_sd * standard_normal(rng);
    const double l = latency_mean + latency_sd * standard_normal(rng);
    total += hvi_sorted(sorted, {a, l}, reference);
  }
  return total / static_cast<double>(mc_samples);
}

}  // namespace teenas

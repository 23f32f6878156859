// SPDX-License-Identifier: Apache-2.0
//
// Monte-Carlo noisy expected hypervolume improvement for the
// (accuracy up, latency down) pair. Each sample jointly redraws the latent
// objectives of the baseline (observed front and pending) points, recomputes
// their front, and scores every candidate by the hypervolume its own
// conditional draw adds on top. Draws use common random numbers across
// candidates, so scores are deterministic for a seed and directly comparable.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "teenas/gp.hpp"
#include "teenas/pareto.hpp"

namespace teenas {

/// Hypervolume gained by adding `candidate` to `front` (points outside the reference box are clipped).
double hypervolume_improvement(std::span<const ObjectivePoint> front, const ObjectivePoint& candidate,
                               const ReferencePoint& reference);

/// Rows of `baseline` are the inputs whose objectives are redrawn each sample
/// (typically the observed front plus pending picks); rows of `candidates` are scored.
std::vector<double> nehvi_acquisition(const GPSurrogate& gp_accuracy, const GPSurrogate& gp_latency,
                                      const Eigen::MatrixXd& candidates, const Eigen::MatrixXd& baseline,
                                      const ReferencePoint& reference, int mc_samples, std::uint64_t seed);

/// Convenience overload: the baseline is the front's encoded inputs.
std::vector<double> nehvi_acquisition(const GPSurrogate& gp_accuracy, const GPSurrogate& gp_latency,
                                      const Eigen::MatrixXd& candidates, const ParetoFront& front,
                                      const ReferencePoint& reference, int mc_samples, std::uint64_t seed);

/// MC expected improvement for a candidate with independent Gaussian
/// objectives against a fixed front; the same estimator nehvi_acquisition uses
/// per sample, without baseline redraws.
double expected_hvi_monte_carlo(std::span<const ObjectivePoint> front, const ReferencePoint& reference,
                                double accuracy_mean, double accuracy_sd, double latency_mean, double latency_sd,
                                int mc_samples, std::uint64_t seed);

}  // namespace teenas

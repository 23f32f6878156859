// SPDX-License-Identifier: Apache-2.0
//
// Gaussian-process surrogate with a Matern-5/2 ARD kernel. Hyperparameters are
// fitted by maximizing the log marginal likelihood plus a half-Cauchy log-prior
// on every inverse squared lengthscale rho_d = 1 / l_d^2:
//
//   log p(rho_d) = -log(1 + (rho_d / tau)^2) + const
//
// which pulls irrelevant coordinates toward infinite lengthscales (a MAP
// stand-in for the sparse axis-aligned subspace prior).
#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace teenas {

struct GPFitOptions {
  int restarts = 3;
  int max_iterations = 150;
  double sparsity_scale = 0.1;  // tau
  double noise_floor = 1e-6;    // standardized units
  bool learn_noise = true;
  std::uint64_t seed = 0;
};

/// Hyperparameters in standardized target units.
struct GPHyperparameters {
  Eigen::VectorXd lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 1e-6;
};

struct GPPrediction {
  double mean = 0.0;
  double variance = 0.0;  // latent function variance, raw target units
};

class GPSurrogate {
 public:
  GPSurrogate() = default;

  /// Throws std::invalid_argument for fewer than two rows or mismatched shapes,
  /// NumericalError if the kernel matrix stays indefinite after jitter escalation.
  static GPSurrogate fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, const GPFitOptions& options);

  /// Conditions on data with fixed hyperparameters (targets standardized internally).
  static GPSurrogate condition(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                               const GPHyperparameters& hyper);

  [[nodiscard]] bool fitted() const { return inputs_.rows() > 0; }
  [[nodiscard]] Eigen::Index dim() const { return inputs_.cols(); }
  [[nodiscard]] Eigen::Index size() const { return inputs_.rows(); }

  GPPrediction predict(const Eigen::VectorXd& x) const;

  /// Joint latent posterior over the rows of `points` (raw units).
  void posterior(const Eigen::MatrixXd& points, Eigen::VectorXd& mean, Eigen::MatrixXd& covariance) const;

  /// Same data plus one observation; hyperparameters and standardization unchanged.
  GPSurrogate with_observation(const Eigen::VectorXd& x, double target) const;

  [[nodiscard]] const GPHyperparameters& hyperparameters() const { return hyper_; }
  [[nodiscard]] double signal_variance() const { return hyper_.signal_variance * y_scale_ * y_scale_; }
  [[nodiscard]] double noise_variance() const { return hyper_.noise_variance * y_scale_ * y_scale_; }
  [[nodiscard]] double prior_mean() const { return y_offset_; }
  [[nodiscard]] double target_scale() const { return y_scale_; }
  [[nodiscard]] double jitter() const { return jitter_; }
  [[nodiscard]] const Eigen::MatrixXd& inputs() const { return inputs_; }
  [[nodiscard]] const Eigen::VectorXd& targets() const { return targets_raw_; }

  /// Standardized-space primitives used by the acquisition.
  [[nodiscard]] double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
  /// L^{-1} k(X, x): whitened cross-covariance with the training inputs.
  [[nodiscard]] Eigen::VectorXd whitened(const Eigen::VectorXd& x) const;
  /// k(X, x)^T K^{-1} y_standardized.
  [[nodiscard]] double standardized_mean(const Eigen::VectorXd& x) const;

  /// Penalized objective (log marginal likelihood + log-priors) at the current hyperparameters.
  [[nodiscard]] double log_marginal_likelihood() const { return lml_; }

 private:
  void factorize();

  Eigen::MatrixXd inputs_;
  Eigen::VectorXd targets_raw_;
  Eigen::VectorXd targets_std_;
  double y_offset_ = 0.0;
  double y_scale_ = 1.0;
  GPHyperparameters hyper_;
  double jitter_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::MatrixXd lower_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
};

/// Matern-5/2 ARD kernel value with unit signal variance.
double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& lengthscales);

namespace gp_detail {
/// Negative penalized log marginal likelihood and its gradient in the
/// optimizer's parameterization theta = (log l_1..D, log s^2, log(noise - floor)).
/// Exposed for gradient tests.
double objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                 const GPFitOptions& options, Eigen::VectorXd* gradient);
}  // namespace gp_detail

}  // namespace teenas

// SPDX-License-Identifier: Apache-2.0
#include "teenas/gp.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "teenas/error.hpp"
#include "teenas/rng.hpp"

namespace teenas {
namespace {

constexpr double kSqrt5 = 2.2360679774997896964;
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kSignalPriorSd = 1.5;
constexpr double kNoisePriorMean = -5.0;
constexpr double kNoisePriorSd = 3.0;
constexpr double kThetaBound = 18.0;

double matern_of_r(double r) { return (1.0 + kSqrt5 * r + 5.0 / 3.0 * r * r) * std::exp(-kSqrt5 * r); }

double scaled_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& ls) {
  return std::sqrt(((a - b).array() / ls.array()).square().sum());
}

// Unit-variance Matern matrix between the rows of A and B.
Eigen::MatrixXd matern_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::VectorXd& ls,
                              Eigen::MatrixXd* distances = nullptr) {
  const Eigen::MatrixXd As = A.array().rowwise() / ls.transpose().array();
  const Eigen::MatrixXd Bs = B.array().rowwise() / ls.transpose().array();
  const Eigen::VectorXd an = As.rowwise().squaredNorm();
  const Eigen::VectorXd bn = Bs.rowwise().squaredNorm();
  Eigen::MatrixXd r2 = (-2.0 * As * Bs.transpose()).colwise() + an;
  r2.rowwise() += bn.transpose();
  Eigen::MatrixXd M(A.rows(), B.rows());
  if (distances) distances->resize(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      const double r = std::sqrt(std::max(0.0, r2(i, j)));
      M(i, j) = matern_of_r(r);
      if (distances) (*distances)(i, j) = r;
    }
  }
  return M;
}

// Cholesky with escalating diagonal jitter; returns the jitter used.
double robust_cholesky(Eigen::MatrixXd& K, Eigen::LLT<Eigen::MatrixXd>& llt) {
  llt.compute(K);
  if (llt.info() == Eigen::Success) return 0.0;
  const double scale = std::max(K.diagonal().mean(), 1e-12);
  for (double j = 1e-10; j <= 1e-2; j *= 10.0) {
    K.diagonal().array() += j * scale;
    llt.compute(K);
    if (llt.info() == Eigen::Success) return j * scale;
    K.diagonal().array() -= j * scale;
  }
  throw NumericalError("gp: kernel matrix not positive definite after jitter escalation");
}

struct Hyper {
  Eigen::VectorXd ls;
  double signal = 1.0;
  double noise = 1e-6;
};

Hyper unpack(const Eigen::VectorXd& theta, Eigen::Index D, const GPFitOptions& opt) {
  Hyper h;
  h.ls = theta.head(D).array().exp();
  h.signal = std::exp(theta[D]);
  h.noise = opt.noise_floor + (opt.learn_noise ? std::exp(theta[D + 1]) : 0.0);
  return h;
}

}  // namespace

double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& lengthscales) {
  return matern_of_r(scaled_distance(a, b, lengthscales));
}

namespace gp_detail {

double objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                 const GPFitOptions& opt, Eigen::VectorXd* gradient) {
  const Eigen::Index n = X.rows();
  const Eigen::Index D = X.cols();
  constexpr double kHuge = 1e10;
  if (gradient) gradient->setZero(D + 2);
  if (!theta.allFinite() || theta.cwiseAbs().maxCoeff() > kThetaBound) return kHuge;

  const Hyper h = unpack(theta, D, opt);
  Eigen::MatrixXd R;
  const Eigen::MatrixXd M = matern_matrix(X, X, h.ls, &R);
  Eigen::MatrixXd K = h.signal * M;
  K.diagonal().array() += h.noise;
  Eigen::LLT<Eigen::MatrixXd> llt;
  try {
    robust_cholesky(K, llt);
  } catch (const NumericalError&) {
    return kHuge;
  }
  const Eigen::VectorXd alpha = llt.solve(y);
  const Eigen::MatrixXd L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  const double lml = -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * kLog2Pi;

  double log_prior = 0.0;
  const double tau = opt.sparsity_scale;
  for (Eigen::Index d = 0; d < D; ++d) {
    const double u = std::exp(-2.0 * theta[d]) / tau;
    log_prior -= std::log1p(u * u);
  }
  log_prior -= 0.5 * theta[D] * theta[D] / (kSignalPriorSd * kSignalPriorSd);
  if (opt.learn_noise) {
    const double z = (theta[D + 1] - kNoisePriorMean) / kNoisePriorSd;
    log_prior -= 0.5 * z * z;
  }
  const double value = -(lml + log_prior);
  if (!std::isfinite(value)) return kHuge;

  if (gradient) {
    const Eigen::MatrixXd Kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;
    auto& g = *gradient;
    // d k / d log l_d = s^2 (5/3)(1 + sqrt5 r) e^{-sqrt5 r} (dx_d / l_d)^2
    Eigen::MatrixXd G(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double r = R(i, j);
        G(i, j) = 0.5 * W(i, j) * h.signal * (5.0 / 3.0) * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
      }
    }
    const Eigen::VectorXd G1 = G.rowwise().sum();
    for (Eigen::Index d = 0; d < D; ++d) {
      const Eigen::VectorXd x = X.col(d);
      // sum_ij G_ij (x_i - x_j)^2 for symmetric G
      const double quad = 2.0 * x.cwiseProduct(x).dot(G1) - 2.0 * x.dot(G * x);
      const double dlml = quad / (h.ls[d] * h.ls[d]);
      const double u = std::exp(-2.0 * theta[d]) / tau;
      const double dprior = 4.0 * u * u / (1.0 + u * u);
      g[d] = -(dlml + dprior);
    }
    g[D] = -(0.5 * (W.cwiseProduct(h.signal * M)).sum() - theta[D] / (kSignalPriorSd * kSignalPriorSd));
    if (opt.learn_noise) {
      g[D + 1] = -(0.5 * W.trace() * std::exp(theta[D + 1]) -
                   (theta[D + 1] - kNoisePriorMean) / (kNoisePriorSd * kNoisePriorSd));
    }
  }
  return value;
}

}  // namespace gp_detail

namespace {

struct FitProblem {
  const Eigen::MatrixXd* X;
  const Eigen::VectorXd* y;
  const GPFitOptions* options;
};

Eigen::VectorXd to_eigen(const gsl_vector* v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v->size));
  for (std::size_t i = 0; i < v->size; ++i) out[static_cast<Eigen::Index>(i)] = gsl_vector_get(v, i);
  return out;
}

double gsl_f(const gsl_vector* v, void* params) {
  const auto* p = static_cast<const FitProblem*>(params);
  return gp_detail::objective(*p->X, *p->y, to_eigen(v), *p->options, nullptr);
}

void gsl_fdf(const gsl_vector* v, void* params, double* f, gsl_vector* df) {
  const auto* p = static_cast<const FitProblem*>(params);
  Eigen::VectorXd grad;
  *f = gp_detail::objective(*p->X, *p->y, to_eigen(v), *p->options, &grad);
  for (std::size_t i = 0; i < df->size; ++i) gsl_vector_set(df, i, grad[static_cast<Eigen::Index>(i)]);
}

void gsl_df(const gsl_vector* v, void* params, gsl_vector* df) {
  double f = 0.0;
  gsl_fdf(v, params, &f, df);
}

// Local BFGS from `start`; returns the best point visited and its value.
std::pair<Eigen::VectorXd, double> minimize(FitProblem& problem, const Eigen::VectorXd& start, int max_iter) {
  const auto n = static_cast<std::size_t>(start.size());
  gsl_multimin_function_fdf fn{&gsl_f, &gsl_df, &gsl_fdf, n, &problem};
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x0(gsl_vector_alloc(n), &gsl_vector_free);
  for (std::size_t i = 0; i < n; ++i) gsl_vector_set(x0.get(), i, start[static_cast<Eigen::Index>(i)]);
  std::unique_ptr<gsl_multimin_fdfminimizer, decltype(&gsl_multimin_fdfminimizer_free)> s(
      gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, n), &gsl_multimin_fdfminimizer_free);
  gsl_multimin_fdfminimizer_set(s.get(), &fn, x0.get(), 0.1, 0.1);
  Eigen::VectorXd best = start;
  double best_f = gsl_multimin_fdfminimizer_minimum(s.get());
  for (int it = 0; it < max_iter; ++it) {
    if (gsl_multimin_fdfminimizer_iterate(s.get()) != GSL_SUCCESS) break;
    const double f = gsl_multimin_fdfminimizer_minimum(s.get());
    if (f < best_f) {
      best_f = f;
      best = to_eigen(gsl_multimin_fdfminimizer_x(s.get()));
    }
    if (gsl_multimin_test_gradient(gsl_multimin_fdfminimizer_gradient(s.get()), 1e-5) == GSL_SUCCESS) break;
  }
  return {best, best_f};
}

void standardize(const Eigen::VectorXd& y, double& offset, double& scale) {
  offset = y.mean();
  const double var = (y.array() - offset).square().mean();
  scale = var > 1e-24 ? std::sqrt(var) : 1.0;
}

}  // namespace

GPSurrogate GPSurrogate::fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                             const GPFitOptions& options) {
  if (inputs.rows() < 2) throw std::invalid_argument("fit_gp: need at least two observations");
  if (inputs.rows() != targets.size()) throw std::invalid_argument("fit_gp: inputs and targets disagree in length");
  if (!inputs.allFinite() || !targets.allFinite()) throw std::invalid_argument("fit_gp: non-finite data");
  gsl_set_error_handler_off();

  GPSurrogate gp;
  gp.inputs_ = inputs;
  gp.targets_raw_ = targets;
  standardize(targets, gp.y_offset_, gp.y_scale_);
  gp.targets_std_ = (targets.array() - gp.y_offset_) / gp.y_scale_;

  const Eigen::Index D = inputs.cols();
  FitProblem problem{&gp.inputs_, &gp.targets_std_, &options};
  Rng rng = make_rng(options.seed, 0x6770);
  Eigen::VectorXd best_theta;
  double best_value = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < std::max(1, options.restarts); ++restart) {
    Eigen::VectorXd theta(D + 2);
    for (Eigen::Index d = 0; d < D; ++d) {
      theta[d] = restart == 0 ? 0.0 : std::log(0.5) + uniform01(rng) * (std::log(4.0) - std::log(0.5));
    }
    theta[D] = 0.0;
    theta[D + 1] = std::log(1e-2);
    const auto [t, v] = minimize(problem, theta, options.max_iterations);
    if (v < best_value) {
      best_value = v;
      best_theta = t;
    }
  }
  const Hyper h = unpack(best_theta, D, options);
  gp.hyper_.lengthscales = h.ls;
  gp.hyper_.signal_variance = h.signal;
  gp.hyper_.noise_variance = h.noise;
  gp.factorize();
  gp.lml_ = -best_value;
  return gp;
}

GPSurrogate GPSurrogate::condition(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                   const GPHyperparameters& hyper) {
  if (inputs.rows() < 1 || inputs.rows() != targets.size()) throw std::invalid_argument("gp: bad conditioning data");
  if (hyper.lengthscales.size() != inputs.cols()) throw std::invalid_argument("gp: lengthscale dimension mismatch");
  GPSurrogate gp;
  gp.inputs_ = inputs;
  gp.targets_raw_ = targets;
  standardize(targets, gp.y_offset_, gp.y_scale_);
  gp.targets_std_ = (targets.array() - gp.y_offset_) / gp.y_scale_;
  gp.hyper_ = hyper;
  gp.factorize();
  return gp;
}

void GPSurrogate::factorize() {
  Eigen::MatrixXd K = hyper_.signal_variance * matern_matrix(inputs_, inputs_, hyper_.lengthscales);
  K.diagonal().array() += hyper_.noise_variance;
  jitter_ = robust_cholesky(K, chol_);
  lower_ = chol_.matrixL();
  alpha_ = chol_.solve(targets_std_);
}

GPSurrogate GPSurrogate::with_observation(const Eigen::VectorXd& x, double target) const {
  if (x.size() != dim()) throw std::invalid_argument("gp: observation dimension mismatch");
  GPSurrogate gp = *this;
  const Eigen::Index n = inputs_.rows();
  gp.inputs_.conservativeResize(n + 1, Eigen::NoChange);
  gp.inputs_.row(n) = x.transpose();
  gp.targets_raw_.conservativeResize(n + 1);
  gp.targets_raw_[n] = target;
  gp.targets_std_.conservativeResize(n + 1);
  gp.targets_std_[n] = (target - y_offset_) / y_scale_;
  gp.factorize();
  return gp;
}

double GPSurrogate::kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  return hyper_.signal_variance * matern52(a, b, hyper_.lengthscales);
}

Eigen::VectorXd GPSurrogate::whitened(const Eigen::VectorXd& x) const {
  Eigen::VectorXd k = hyper_.signal_variance * matern_matrix(inputs_, x.transpose(), hyper_.lengthscales).col(0);
  lower_.triangularView<Eigen::Lower>().solveInPlace(k);
  return k;
}

double GPSurrogate::standardized_mean(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd k = hyper_.signal_variance * matern_matrix(inputs_, x.transpose(), hyper_.lengthscales).col(0);
  return k.dot(alpha_);
}

GPPrediction GPSurrogate::predict(const Eigen::VectorXd& x) const {
  if (!fitted()) throw std::invalid_argument("predict: surrogate not fitted");
  if (x.size() != dim()) throw std::invalid_argument("predict: dimension mismatch");
  const Eigen::VectorXd k = hyper_.signal_variance * matern_matrix(inputs_, x.transpose(), hyper_.lengthscales).col(0);
  Eigen::VectorXd v = k;
  lower_.triangularView<Eigen::Lower>().solveInPlace(v);
  const double var = std::max(0.0, hyper_.signal_variance - v.squaredNorm());
  return {y_offset_ + y_scale_ * k.dot(alpha_), y_scale_ * y_scale_ * var};
}

void GPSurrogate::posterior(const Eigen::MatrixXd& points, Eigen::VectorXd& mean, Eigen::MatrixXd& covariance) const {
  if (!fitted()) throw std::invalid_argument("posterior: surrogate not fitted");
  if (points.cols() != dim()) throw std::invalid_argument("posterior: dimension mismatch");
  const Eigen::MatrixXd Kxs = hyper_.signal_variance * matern_matrix(inputs_, points, hyper_.lengthscales);
  const Eigen::MatrixXd Kss = hyper_.signal_variance * matern_matrix(points, points, hyper_.lengthscales);
  const Eigen::MatrixXd V = lower_.triangularView<Eigen::Lower>().solve(Kxs);
  mean = (Kxs.transpose() * alpha_).array() * y_scale_ + y_offset_;
  covariance = (Kss - V.transpose() * V) * (y_scale_ * y_scale_);
}

}  // namespace teenas

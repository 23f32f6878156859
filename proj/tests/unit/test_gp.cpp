// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "teenas/gp.hpp"
#include "teenas/rng.hpp"

using namespace teenas;

namespace {

double matern_oracle(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& ls) {
  double r2 = 0.0;
  for (Eigen::Index d = 0; d < a.size(); ++d) r2 += std::pow((a[d] - b[d]) / ls[d], 2);
  const double r = std::sqrt(5.0 * r2);
  return (1.0 + r + r * r / 3.0) * std::exp(-r);
}

struct Data {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Data make_data(int n, int d, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Data out{Eigen::MatrixXd(n, d), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out.X(i, j) = uniform01(rng);
    // Depends on the first coordinate only.
    out.y[i] = 3.0 + 2.0 * std::sin(4.0 * out.X(i, 0)) + 0.01 * standard_normal(rng);
  }
  return out;
}

}  // namespace

TEST_CASE("kernel matches the closed form") {
  Eigen::VectorXd a(3), b(3), ls(3);
  a << 0.1, 0.5, 0.9;
  b << 0.3, 0.2, 0.8;
  ls << 0.5, 1.0, 2.0;
  CHECK(matern52(a, b, ls) == doctest::Approx(matern_oracle(a, b, ls)).epsilon(1e-14));
  CHECK(matern52(a, a, ls) == doctest::Approx(1.0));
}

TEST_CASE("posterior equals a direct dense solve in raw units") {
  const Data data = make_data(15, 3, 1);
  GPHyperparameters h;
  h.lengthscales = Eigen::Vector3d(0.4, 0.7, 1.5);
  h.signal_variance = 1.3;
  h.noise_variance = 1e-3;
  const GPSurrogate gp = GPSurrogate::condition(data.X, data.y, h);
  REQUIRE(gp.jitter() == 0.0);

  const double s2 = gp.signal_variance();
  const double n2 = gp.noise_variance();
  const double m = gp.prior_mean();
  const Eigen::Index n = data.X.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      K(i, j) = s2 * matern_oracle(data.X.row(i), data.X.row(j), h.lengthscales) + (i == j ? n2 : 0.0);
    }
  }
  const Eigen::MatrixXd Kinv = K.inverse();
  Rng rng = make_rng(2);
  for (int t = 0; t < 10; ++t) {
    Eigen::VectorXd x(3);
    for (int j = 0; j < 3; ++j) x[j] = uniform01(rng);
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k[i] = s2 * matern_oracle(data.X.row(i), x, h.lengthscales);
    const double mean = m + k.dot(Kinv * (data.y.array() - m).matrix());
    const double var = s2 - k.dot(Kinv * k);
    const GPPrediction p = gp.predict(x);
    CHECK(p.mean == doctest::Approx(mean).epsilon(1e-8));
    CHECK(p.variance == doctest::Approx(var).epsilon(1e-6));
  }
}

TEST_CASE("joint posterior agrees with pointwise predictions") {
  const Data data = make_data(12, 2, 3);
  GPHyperparameters h;
  h.lengthscales = Eigen::Vector2d(0.3, 0.6);
  const GPSurrogate gp = GPSurrogate::condition(data.X, data.y, h);
  Eigen::MatrixXd pts(4, 2);
  pts << 0.1, 0.2, 0.5, 0.5, 0.9, 0.1, 0.3, 0.7;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  gp.posterior(pts, mean, cov);
  for (int i = 0; i < 4; ++i) {
    const GPPrediction p = gp.predict(pts.row(i).transpose());
    CHECK(mean[i] == doctest::Approx(p.mean).epsilon(1e-10));
    CHECK(cov(i, i) == doctest::Approx(p.variance).epsilon(1e-8));
  }
  CHECK((cov - cov.transpose()).norm() < 1e-12);
}

TEST_CASE("adding an observation equals conditioning from scratch") {
  const Data data = make_data(10, 2, 4);
  GPHyperparameters h;
  h.lengthscales = Eigen::Vector2d(0.5, 0.5);
  const GPSurrogate base = GPSurrogate::condition(data.X.topRows(9), data.y.head(9), h);
  const GPSurrogate grown = base.with_observation(data.X.row(9).transpose(), data.y[9]);
  CHECK(grown.size() == 10);
  // Standardization is frozen, so compare against the oracle built on base's scale.
  Eigen::VectorXd x(2);
  x << 0.33, 0.66;
  const GPPrediction p = grown.predict(x);
  const double s2 = base.signal_variance();
  const double n2 = base.noise_variance();
  const double m = base.prior_mean();
  Eigen::MatrixXd K(10, 10);
  Eigen::VectorXd k(10);
  for (int i = 0; i < 10; ++i) {
    k[i] = s2 * matern_oracle(data.X.row(i), x, h.lengthscales);
    for (int j = 0; j < 10; ++j) {
      K(i, j) = s2 * matern_oracle(data.X.row(i), data.X.row(j), h.lengthscales) + (i == j ? n2 : 0.0);
    }
  }
  CHECK(p.mean == doctest::Approx(m + k.dot(K.ldlt().solve((data.y.array() - m).matrix()))).epsilon(1e-8));
}

TEST_CASE("objective gradient matches central differences") {
  const Data data = make_data(14, 3, 5);
  GPFitOptions o;
  Eigen::VectorXd theta(5);
  theta << std::log(0.4), std::log(0.9), std::log(1.7), std::log(1.2), std::log(1e-2);
  // The objective works in standardized target units.
  const Eigen::VectorXd ys = (data.y.array() - data.y.mean()) / std::sqrt((data.y.array() - data.y.mean()).square().mean());
  Eigen::VectorXd grad;
  gp_detail::objective(data.X, ys, theta, o, &grad);
  REQUIRE(grad.size() == theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double eps = 1e-5;
    Eigen::VectorXd up = theta, dn = theta;
    up[i] += eps;
    dn[i] -= eps;
    const double fd = (gp_detail::objective(data.X, ys, up, o, nullptr) -
                       gp_detail::objective(data.X, ys, dn, o, nullptr)) / (2 * eps);
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("fitting shrinks irrelevant coordinates and interpolates") {
  const Data data = make_data(30, 4, 6);
  GPFitOptions o;
  o.seed = 1;
  const GPSurrogate gp = GPSurrogate::fit(data.X, data.y, o);
  const Eigen::VectorXd& ls = gp.hyperparameters().lengthscales;
  for (int d = 1; d < 4; ++d) CHECK(ls[d] > 3.0 * ls[0]);
  for (int i = 0; i < 30; ++i) {
    CHECK(gp.predict(data.X.row(i).transpose()).mean == doctest::Approx(data.y[i]).epsilon(0.02));
  }
  // Deterministic for a seed.
  const GPSurrogate again = GPSurrogate::fit(data.X, data.y, o);
  CHECK((again.hyperparameters().lengthscales - ls).norm() == 0.0);
}

TEST_CASE("fit rejects bad shapes") {
  CHECK_THROWS_AS(GPSurrogate::fit(Eigen::MatrixXd(1, 2), Eigen::VectorXd(1), {}), std::invalid_argument);
  CHECK_THROWS_AS(GPSurrogate::fit(Eigen::MatrixXd(3, 2), Eigen::VectorXd(2), {}), std::invalid_argument);
  CHECK_THROWS_AS(GPSurrogate{}.predict(Eigen::VectorXd(2)), std::invalid_argument);
}

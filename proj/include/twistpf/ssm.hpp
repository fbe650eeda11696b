#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "twistpf/gauss.hpp"

namespace twistpf {

// Nonlinear Gaussian state-space model:
//   x_0 ~ N(init),  x_{k+1} | x_k ~ N(drift(k, x_k), drift_cov(k)),
//   y_k | x_k ~ N(obs(k, x_k), obs_cov(k)).
// drift(k, .) is the transition mean out of time k; obs dimension may vary
// with k (RSS visibility). Angular observation components are declared so
// residuals can be wrapped.
struct GaussianSsm {
  int state_dim = 0;
  Gaussian init;
  std::function<Vector(int, const Vector&)> drift;
  std::function<Matrix(int, const Vector&)> drift_jac;
  std::function<Matrix(int)> drift_cov;
  std::function<int(int)> obs_dim;
  std::function<Vector(int, const Vector&)> obs;
  std::function<Matrix(int, const Vector&)> obs_jac;
  std::function<Matrix(int)> obs_cov;
  std::function<std::vector<int>(int)> angular = [](int) { return std::vector<int>{}; };
};

struct Theta {
  Vector values;
  std::vector<std::string> names;
};

// Observation sequence, optionally with the simulated truth. `visible`
// carries, per step, the identity of each stacked observation component
// (RSS base-station indices); empty means all columns present every step.
struct Dataset {
  std::vector<Vector> obs;
  std::vector<Vector> truth;
  std::vector<std::vector<int>> visible;
  int obs_cols = 0;

  int horizon() const { return static_cast<int>(obs.size()) - 1; }
};

inline double wrap_angle(double a) {
  double r = std::fmod(a + M_PI, 2.0 * M_PI);
  if (r <= 0.0) r += 2.0 * M_PI;
  return r - M_PI;  // in (-pi, pi]
}

// y - h_k(x) with angular components wrapped to (-pi, pi]
inline Vector obs_residual(const GaussianSsm& model, int k, const Vector& x, const Vector& y) {
  Vector r = y - model.obs(k, x);
  for (int idx : model.angular(k)) r(idx) = wrap_angle(r(idx));
  return r;
}

inline double log_obs_density(const GaussianSsm& model, int k, const Vector& x, const Vector& y,
                              const CholPsd& obs_cov_factor) {
  return mvn_logpdf_residual(obs_residual(model, k, x, y), obs_cov_factor);
}

inline double log_obs_density(const GaussianSsm& model, int k, const Vector& x, const Vector& y) {
  return log_obs_density(model, k, x, y, chol_psd(model.obs_cov(k)));
}

// density of x_{k} given x_{k-1} = x_prev (transition out of time k-1)
inline double log_trans_density(const GaussianSsm& model, int k, const Vector& x_prev, const Vector& x) {
  return mvn_logpdf(x, Gaussian(model.drift(k - 1, x_prev), model.drift_cov(k - 1)));
}

inline Dataset simulate(const GaussianSsm& model, int horizon, Rng& rng) {
  if (horizon < 0) throw InvalidParameter("simulate: negative horizon");
  Dataset data;
  data.obs_cols = model.obs_dim(0);
  Vector x = mvn_sample(rng, model.init);
  for (int k = 0; k <= horizon; ++k) {
    if (k > 0) x = mvn_sample(rng, Gaussian(model.drift(k - 1, x), model.drift_cov(k - 1)));
    Vector y = mvn_sample(rng, Gaussian(model.obs(k, x), model.obs_cov(k)));
    data.truth.push_back(x);
    data.obs.push_back(std::move(y));
    data.obs_cols = std::max(data.obs_cols, model.obs_dim(k));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Concrete models
// ---------------------------------------------------------------------------

inline GaussianSsm linear_gaussian_model(const Matrix& a, const Matrix& q, const Matrix& h,
                                         const Matrix& r, const Vector& nu0, const Matrix& p0) {
  const Eigen::Index dx = a.rows();
  const Eigen::Index dy = h.rows();
  if (a.cols() != dx || q.rows() != dx || q.cols() != dx || h.cols() != dx || r.rows() != dy ||
      r.cols() != dy || nu0.size() != dx || p0.rows() != dx || p0.cols() != dx)
    throw ShapeMismatch("linear_gaussian_model: inconsistent shapes");
  GaussianSsm m;
  m.state_dim = static_cast<int>(dx);
  m.init = Gaussian(nu0, p0);
  m.drift = [a](int, const Vector& x) -> Vector { return a * x; };
  m.drift_jac = [a](int, const Vector&) -> Matrix { return a; };
  m.drift_cov = [q](int) -> Matrix { return q; };
  m.obs_dim = [dy](int) { return static_cast<int>(dy); };
  m.obs = [h](int, const Vector& x) -> Vector { return h * x; };
  m.obs_jac = [h](int, const Vector&) -> Matrix { return h; };
  m.obs_cov = [r](int) -> Matrix { return r; };
  return m;
}

// Constant-velocity dynamics shared by the tracking models: state
// (r1, r2, v1, v2), transition [[I, I dt], [0, I]], discretized white-noise
// acceleration covariance q2 * [[dt^3/3 I, dt^2/2 I], [dt^2/2 I, dt I]].
inline std::pair<Matrix, Matrix> constant_velocity_dynamics(double q2, double dt) {
  Matrix a = Matrix::Identity(4, 4);
  a(0, 2) = dt;
  a(1, 3) = dt;
  Matrix q = Matrix::Zero(4, 4);
  const double d3 = dt * dt * dt / 3.0, d2 = dt * dt / 2.0;
  q(0, 0) = q(1, 1) = q2 * d3;
  q(2, 2) = q(3, 3) = q2 * dt;
  q(0, 2) = q(2, 0) = q(1, 3) = q(3, 1) = q2 * d2;
  return {a, q};
}

inline GaussianSsm range_bearing_model(double q2, double sigma1_sq, double sigma2_sq,
                                       double dt = 1.0) {
  if (!(q2 > 0.0) || !(sigma1_sq > 0.0) || !(sigma2_sq > 0.0))
    throw InvalidParameter("range_bearing_model: variances must be positive");
  auto [a, q] = constant_velocity_dynamics(q2, dt);
  GaussianSsm m;
  m.state_dim = 4;
  Vector nu0(4);
  nu0 << 100.0, 100.0, 0.0, 0.0;
  Vector p0_diag(4);
  p0_diag << 100.0, 100.0, 1e-3, 1e-3;
  m.init = Gaussian(nu0, p0_diag.asDiagonal());
  m.drift = [a](int, const Vector& x) -> Vector { return a * x; };
  m.drift_jac = [a](int, const Vector&) -> Matrix { return a; };
  m.drift_cov = [q](int) -> Matrix { return q; };
  m.obs_dim = [](int) { return 2; };
  m.obs = [](int, const Vector& x) -> Vector {
    const double rho = std::hypot(x(0), x(1));
    if (rho < 1e-6) throw SingularGeometry("range_bearing: state at measurement station");
    Vector y(2);
    y << rho, std::atan2(x(1), x(0));
    return y;
  };
  m.obs_jac = [](int, const Vector& x) -> Matrix {
    const double r2 = x(0) * x(0) + x(1) * x(1);
    const double rho = std::sqrt(r2);
    if (rho < 1e-6) throw SingularGeometry("range_bearing: state at measurement station");
    Matrix jac = Matrix::Zero(2, 4);
    jac(0, 0) = x(0) / rho;
    jac(0, 1) = x(1) / rho;
    jac(1, 0) = -x(1) / r2;
    jac(1, 1) = x(0) / r2;
    return jac;
  };
  Matrix r = Matrix::Zero(2, 2);
  r(0, 0) = sigma1_sq;
  r(1, 1) = sigma2_sq;
  m.obs_cov = [r](int) -> Matrix { return r; };
  m.angular = [](int) { return std::vector<int>{1}; };
  return m;
}

// Received-signal-strength model: h^i(r) = rho_i - 10 lambda_i log10 |r_BS,i - r|
// stacked over the stations visible at step k; same dynamics as range-bearing.
inline GaussianSsm rss_model(const std::vector<double>& lambdas, const std::vector<double>& rhos,
                             double sigma2, double q2,
                             const std::vector<Eigen::Vector2d>& stations,
                             std::vector<std::vector<int>> visibility, double dt = 1.0,
                             Vector nu0 = Vector(), Matrix p0 = Matrix()) {
  if (!(q2 > 0.0) || !(sigma2 > 0.0)) throw InvalidParameter("rss_model: variances must be positive");
  if (lambdas.size() != rhos.size() || lambdas.size() != stations.size())
    throw ShapeMismatch("rss_model: per-station parameter counts disagree");
  for (const auto& set : visibility)
    if (set.empty()) throw InvalidParameter("rss_model: empty visibility set");
  auto [a, q] = constant_velocity_dynamics(q2, dt);
  GaussianSsm m;
  m.state_dim = 4;
  if (nu0.size() == 0) {
    nu0 = Vector::Zero(4);
    Vector p0_diag(4);
    p0_diag << 100.0, 100.0, 1e-3, 1e-3;
    p0 = p0_diag.asDiagonal();
  }
  m.init = Gaussian(nu0, p0);
  m.drift = [a](int, const Vector& x) -> Vector { return a * x; };
  m.drift_jac = [a](int, const Vector&) -> Matrix { return a; };
  m.drift_cov = [q](int) -> Matrix { return q; };
  auto vis = std::make_shared<std::vector<std::vector<int>>>(std::move(visibility));
  auto set_at = [vis](int k) -> const std::vector<int>& {
    if (vis->empty()) throw InvalidParameter("rss_model: no visibility data");
    return (*vis)[std::min<std::size_t>(k, vis->size() - 1)];
  };
  m.obs_dim = [set_at](int k) { return static_cast<int>(set_at(k).size()); };
  m.obs = [set_at, lambdas, rhos, stations](int k, const Vector& x) -> Vector {
    const auto& set = set_at(k);
    Vector y(set.size());
    for (std::size_t j = 0; j < set.size(); ++j) {
      const int i = set[j];
      const double dist = (stations[i] - x.head<2>()).norm();
      if (dist < 1e-6) throw SingularGeometry("rss_model: state at base station");
      y(j) = rhos[i] - 10.0 * lambdas[i] * std::log10(dist);
    }
    return y;
  };
  m.obs_jac = [set_at, lambdas, stations](int k, const Vector& x) -> Matrix {
    const auto& set = set_at(k);
    Matrix jac = Matrix::Zero(set.size(), 4);
    constexpr double kTenOverLn10 = 10.0 / 2.302585092994045684017991454684;
    for (std::size_t j = 0; j < set.size(); ++j) {
      const int i = set[j];
      const Eigen::Vector2d diff = x.head<2>() - stations[i];
      const double d2 = diff.squaredNorm();
      if (d2 < 1e-12) throw SingularGeometry("rss_model: state at base station");
      jac.row(j).head<2>() = -(kTenOverLn10 * lambdas[i] / d2) * diff.transpose();
    }
    return jac;
  };
  m.obs_cov = [sigma2, set_at](int k) -> Matrix {
    return sigma2 * Matrix::Identity(set_at(k).size(), set_at(k).size());
  };
  return m;
}

// Samples per-step visibility sets: each station present independently with
// probability `present_prob`, redrawn until nonempty.
inline std::vector<std::vector<int>> sample_visibility(int horizon, int n_stations,
                                                       double present_prob, Rng& rng) {
  std::vector<std::vector<int>> sets;
  sets.reserve(horizon + 1);
  for (int k = 0; k <= horizon; ++k) {
    std::vector<int> set;
    while (set.empty()) {
      for (int i = 0; i < n_stations; ++i)
        if (rng.uniform() < present_prob) set.push_back(i);
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

}  // namespace twistpf

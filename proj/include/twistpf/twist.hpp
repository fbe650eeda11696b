#pragma once

#include <tuple>
#include <utility>
#include <vector>

#include "twistpf/kalman.hpp"
#include "twistpf/smc.hpp"
#include "twistpf/ssm.hpp"

namespace twistpf {

// Exponential-quadratic twisting function
//   phi(x) = exp( log_scale + lin . x - x' quad x / 2 ),
// the closed form under which all one-step integrals against Gaussians stay
// analytic. quad is PSD by construction (a sum of Gram terms).
struct ExpQuadTwist {
  double log_scale = 0.0;
  Vector lin;
  Matrix quad;
  int lookahead = 0;

  static ExpQuadTwist unit(int dim) {
    return {0.0, Vector::Zero(dim), Matrix::Zero(dim, dim), 0};
  }

  bool is_unit() const { return log_scale == 0.0 && lin.isZero(0.0) && quad.isZero(0.0); }

  double log_eval(const Vector& x) const {
    return log_scale + lin.dot(x) - 0.5 * x.dot(quad * x);
  }
};

// Twist from a single linearized observation y ~ N(obs_mat x + obs_off, r):
// the quadratic expansion of log N(y; obs_mat x + obs_off, r) in x, with the
// full normalizing constant kept in log_scale.
inline ExpQuadTwist obs_twist(const Matrix& obs_mat, const Vector& obs_off, const Vector& y,
                              const Matrix& r_cov) {
  const CholPsd rf = chol_psd(r_cov);
  const Vector resid = y - obs_off;
  const Vector r_inv_resid = rf.solve(resid);
  ExpQuadTwist t;
  t.log_scale = -0.5 * (resid.dot(r_inv_resid) + resid.size() * kLog2Pi + rf.log_det());
  t.lin = obs_mat.transpose() * r_inv_resid;
  const Matrix r_inv_h = rf.solve(obs_mat);
  Matrix q = obs_mat.transpose() * r_inv_h;
  t.quad = 0.5 * (q + q.transpose());
  t.lookahead = 0;
  return t;
}

// Accumulates the twist for measurements further ahead. Carries the affine
// map x_anchor -> conditional law of the state s steps ahead given the
// measurements absorbed so far:
//   E[x_{k+s} | x_k, y_(absorbed)] = mean_slope x_k + mean_base,
//   Cov(x_{k+s} | x_k, y_(absorbed)) = cov.
struct TwistBuilder {
  ExpQuadTwist twist;
  Matrix mean_slope;
  Matrix cov;
  Vector mean_base;
  bool primed = false;

  // Seed the one-step-ahead law with the transition linearized at the
  // anchor point: slope = drift Jacobian, base = affine offset, cov = Q.
  void prime(const Matrix& drift_mat, const Vector& drift_off, const Matrix& q_cov) {
    mean_slope = drift_mat;
    mean_base = drift_off;
    cov = q_cov;
    primed = true;
  }

  // Absorb the measurement at the current lookahead step, given the
  // observation linearization (obs_mat, obs_off) there, then advance the
  // conditional law one step with the transition linearization at the same
  // point.
  void absorb(const Matrix& obs_mat, const Vector& obs_off, const Vector& y, const Matrix& r_cov,
              const Matrix& drift_mat, const Vector& drift_off, const Matrix& q_cov) {
    if (!primed) throw InvalidParameter("TwistBuilder: absorb before prime");
    const Vector innov = y - obs_off - obs_mat * mean_base;
    Matrix innov_cov = obs_mat * cov * obs_mat.transpose() + r_cov;
    innov_cov = 0.5 * (innov_cov + innov_cov.transpose());
    const CholPsd sf = chol_psd(innov_cov);
    const Matrix gain = sf.solve(obs_mat * cov).transpose();

    twist.log_scale += -0.5 * innov.dot(sf.solve(innov)) - 0.5 * sf.log_det();
    const Matrix hd = obs_mat * mean_slope;
    twist.lin += hd.transpose() * sf.solve(innov);
    Matrix gram = hd.transpose() * sf.solve(hd);
    twist.quad += 0.5 * (gram + gram.transpose());
    twist.lookahead += 1;

    mean_base = drift_mat * (mean_base + gain * innov) + drift_off;
    Matrix next_cov =
        drift_mat * (cov - gain * innov_cov * gain.transpose()) * drift_mat.transpose() + q_cov;
    cov = 0.5 * (next_cov + next_cov.transpose());
    mean_slope = drift_mat * (mean_slope - gain * (obs_mat * mean_slope));
  }
};

namespace detail {

// Move angular components of y onto the branch nearest the predicted
// observation, so the affine algebra sees small residuals.
inline Vector branch_adjusted_obs(const GaussianSsm& model, int k, const Vector& lin_point,
                                  const Vector& y) {
  const auto angular = model.angular(k);
  if (angular.empty()) return y;
  const Vector pred = model.obs(k, lin_point);
  Vector adj = y;
  for (int idx : angular) adj(idx) = pred(idx) + wrap_angle(y(idx) - pred(idx));
  return adj;
}

enum class TwistStart {
  predict_update,  // k >= 1 local scheme: point mass at an ancestor state
  update_only,     // k = 0: prior (nu0, P0), recursion starts at the update step
  linearize_only   // mode scheme: anchor point given, no measurement update
};

inline std::pair<Matrix, Vector> relinearize_obs(const GaussianSsm& model, int k,
                                                 const Vector& point) {
  Matrix h = model.obs_jac(k, point);
  Vector off = model.obs(k, point) - h * point;
  return {std::move(h), std::move(off)};
}

inline ExpQuadTwist build_twist(const GaussianSsm& model, int k, const Vector& x_start,
                                const Matrix& p_start, const std::vector<Vector>& window,
                                TwistStart start, bool relinearize) {
  const int l = static_cast<int>(window.size()) - 1;
  if (l < 0) throw InvalidParameter("build_twist: empty observation window");
  const int d = model.state_dim;

  FilterState state;
  switch (start) {
    case TwistStart::predict_update:
      state = {x_start, Matrix::Zero(d, d), 0.0};
      state = ekf_predict(state, model, k - 1).state;
      state = ekf_update(state, model, k, window[0]).state;
      break;
    case TwistStart::update_only:
      state = {x_start, p_start, 0.0};
      state = ekf_update(state, model, k, window[0]).state;
      break;
    case TwistStart::linearize_only:
      state = {x_start, Matrix::Zero(d, d), 0.0};
      break;
  }

  auto [obs_mat, obs_off] = relinearize_obs(model, k, state.mean);
  const Vector y0 = branch_adjusted_obs(model, k, state.mean, window[0]);
  TwistBuilder builder;
  builder.twist = obs_twist(obs_mat, obs_off, y0, model.obs_cov(k));

  Matrix drift_mat = model.drift_jac(k, state.mean);
  Vector drift_off = model.drift(k, state.mean) - drift_mat * state.mean;
  builder.prime(drift_mat, drift_off, model.drift_cov(k));

  for (int s = 1; s <= l; ++s) {
    state = ekf_predict(state, model, k + s - 1).state;
    const UpdateResult up = ekf_update(state, model, k + s, window[s]);
    Vector lin_point;
    Matrix h;
    Vector h_off;
    if (relinearize) {
      state = up.state;
      lin_point = state.mean;
      std::tie(h, h_off) = relinearize_obs(model, k + s, lin_point);
    } else {
      lin_point = state.mean;  // predicted mean
      h = up.lin.obs_mat;
      h_off = up.lin.obs_off;
      state = up.state;
    }
    const Vector ys = branch_adjusted_obs(model, k + s, lin_point, window[s]);
    const Matrix c = model.drift_jac(k + s, state.mean);
    const Vector c_off = model.drift(k + s, state.mean) - c * state.mean;
    builder.absorb(h, h_off, ys, model.obs_cov(k + s), c, c_off, model.drift_cov(k + s));
  }
  return builder.twist;
}

}  // namespace detail

// Twist for the initial step: EKF pass from the prior (nu0, P0), started at
// the update step, relinearizing along the filter trajectory.
inline ExpQuadTwist prior_ekf_twist(const GaussianSsm& model, const std::vector<Vector>& window,
                                    bool relinearize = true) {
  return detail::build_twist(model, 0, model.init.mean, model.init.cov, window,
                             detail::TwistStart::update_only, relinearize);
}

// Per-particle twists for k >= 1: an EKF pass from a point mass at each
// ancestor state. A particle whose pass fails numerically falls back to its
// own lookahead-0 twist; the count of such fallbacks is reported.
inline std::vector<ExpQuadTwist> local_ekf_twists(const GaussianSsm& model, int k,
                                                  const std::vector<Vector>& particles,
                                                  const std::vector<Vector>& window,
                                                  bool relinearize = true,
                                                  int* fallback_count = nullptr) {
  std::vector<ExpQuadTwist> twists;
  twists.reserve(particles.size());
  for (const Vector& x : particles) {
    try {
      twists.push_back(detail::build_twist(model, k, x, Matrix(), window,
                                           detail::TwistStart::predict_update, relinearize));
    } catch (const std::runtime_error&) {
      if (fallback_count) ++*fallback_count;
      twists.push_back(detail::build_twist(model, k, x, Matrix(), {window[0]},
                                           detail::TwistStart::predict_update, relinearize));
    }
  }
  return twists;
}

// Shared twist for k >= 1, linearized around an approximate mode of
// p(y_{k:k+l} | x_k): Gaussian fit to the one-step-ahead particle cloud,
// extended RTS smoothed mean as the mode proxy, one linearization pass.
inline std::vector<ExpQuadTwist> mode_ekf_twists(const GaussianSsm& model, int k,
                                                 const std::vector<Vector>& particles,
                                                 const std::vector<Vector>& window,
                                                 bool relinearize = true) {
  const int n = static_cast<int>(particles.size());
  const int d = model.state_dim;
  Vector mean = Vector::Zero(d);
  std::vector<Vector> pushed(n);
  for (int i = 0; i < n; ++i) {
    pushed[i] = model.drift(k - 1, particles[i]);
    mean += pushed[i];
  }
  mean /= n;
  Matrix cov = Matrix::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    const Vector c = pushed[i] - mean;
    cov += c * c.transpose();
  }
  cov /= n;
  cov.diagonal().array() += 1e-6;

  const Vector mode = rts_smoothed_mean(model, Gaussian(mean, cov), k, window);
  ExpQuadTwist shared = detail::build_twist(model, k, mode, Matrix(), window,
                                            detail::TwistStart::linearize_only, relinearize);
  return std::vector<ExpQuadTwist>(n, shared);
}

// Moments of the product phi(x) N(x; pred_mean, pred_cov), i.e. the twisted
// proposal, together with the log of its normalizing integral
// log int phi(x) N(x; pred_mean, pred_cov) dx.
struct TwistProduct {
  Vector mean;
  Matrix cov;
  double log_integral = 0.0;
};

inline TwistProduct twist_product(const ExpQuadTwist& twist, const Matrix& pred_cov,
                                  const Vector& pred_mean) {
  if (twist.is_unit()) return {pred_mean, pred_cov, twist.log_scale};
  const CholPsd qf = chol_psd(pred_cov);
  const Vector q_inv_mean = qf.solve(pred_mean);
  const Matrix ident = Matrix::Identity(pred_cov.rows(), pred_cov.cols());
  Matrix precision = twist.quad + qf.solve(ident);
  precision = 0.5 * (precision + precision.transpose());
  const CholPsd pf = chol_psd(precision);
  TwistProduct out;
  const Vector rhs = q_inv_mean + twist.lin;
  out.mean = pf.solve(rhs);
  out.cov = pf.solve(ident);
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  // mu' Sigma^-1 mu = mu . rhs since Sigma^-1 mu = rhs
  out.log_integral = twist.log_scale - 0.5 * pf.log_det() - 0.5 * qf.log_det() +
                     0.5 * out.mean.dot(rhs) - 0.5 * pred_mean.dot(q_inv_mean);
  return out;
}

struct GaussianMoments {
  Vector mean;
  Matrix cov;
};

inline GaussianMoments twisted_moments(const ExpQuadTwist& twist, const Matrix& pred_cov,
                                       const Vector& pred_mean) {
  TwistProduct p = twist_product(twist, pred_cov, pred_mean);
  return {std::move(p.mean), std::move(p.cov)};
}

// log int phi(x) N(x; pred_mean, pred_cov) dx; with pred = (Q, c(xi)) this
// is the one-step twisted weight factor log V~.
inline double log_twist_integral(const ExpQuadTwist& twist, const Matrix& pred_cov,
                                 const Vector& pred_mean) {
  return twist_product(twist, pred_cov, pred_mean).log_integral;
}

// Initial twisted likelihood estimate: log of the bracketed constant
// (= log int psi_0 q_0) plus log sum W_0 minus log sum psi_0(xi_0).
inline double twisted_init_loglik(const ExpQuadTwist& twist0, const Gaussian& init,
                                  double log_sum_w0, double log_sum_psi0) {
  return log_twist_integral(twist0, init.cov, init.mean) + log_sum_w0 - log_sum_psi0;
}

// log psi_k at a realized transition: log f_k(x | x_prev) + log phi(x)
// - log q_k(x | x_prev). For bootstrap proposals the transition terms
// cancel identically.
inline double log_psi(const GaussianSsm& model, const Proposal& proposal, int k,
                      const Line* line, const Vector& y, const Vector& x,
                      const ExpQuadTwist& twist) {
  if (proposal.kind == Proposal::Kind::bootstrap) return twist.log_eval(x);
  double lf = (k == 0) ? mvn_logpdf(x, model.init) : log_trans_density(model, k, line->state(), x);
  return lf + twist.log_eval(x) - proposal.logpdf(k, line, y, x);
}

}  // namespace twistpf

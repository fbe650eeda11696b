#pragma once

#include <vector>

#include "twistpf/ssm.hpp"

namespace twistpf {

struct FilterState {
  Vector mean;
  Matrix cov;
  double loglik = 0.0;
};

// One linearization step of the extended filter. Offsets satisfy
// drift_off = c(x) - drift_mat * x and obs_off = h(x) - obs_mat * x at the
// respective linearization points, so the linearized model is affine-exact
// there.
struct LinearizedStep {
  Matrix drift_mat;   // Jacobian of the transition mean
  Vector drift_off;   // affine offset of the transition mean
  Matrix obs_mat;     // Jacobian of the observation mean
  Vector obs_off;     // affine offset of the observation mean
  Matrix innov_cov;   // innovation covariance
  Matrix gain;        // Kalman gain
  Vector innov;       // (wrapped) innovation
};

namespace detail {
inline Matrix repaired(const Matrix& cov) {
  Matrix sym = 0.5 * (cov + cov.transpose());
  const CholPsd f = chol_psd(sym);
  if (f.jitter > 0.0) sym.diagonal().array() += f.jitter;
  return sym;
}
}  // namespace detail

struct PredictResult {
  FilterState state;  // prior at time k_from + 1
  Matrix drift_mat;   // Jacobian of drift(k_from, .) at the previous mean
  Vector drift_off;
};

// Propagate through the transition out of time `k_from`.
inline PredictResult ekf_predict(const FilterState& state, const GaussianSsm& model, int k_from) {
  PredictResult out;
  out.drift_mat = model.drift_jac(k_from, state.mean);
  const Vector pred_mean = model.drift(k_from, state.mean);
  out.drift_off = pred_mean - out.drift_mat * state.mean;
  out.state.mean = pred_mean;
  out.state.cov = detail::repaired(out.drift_mat * state.cov * out.drift_mat.transpose() +
                                   model.drift_cov(k_from));
  out.state.loglik = state.loglik;
  return out;
}

struct UpdateResult {
  FilterState state;
  LinearizedStep lin;  // linearization at the predicted mean (pre-update)
};

inline UpdateResult ekf_update(const FilterState& prior, const GaussianSsm& model, int k,
                               const Vector& y) {
  if (y.size() != model.obs_dim(k)) throw ShapeMismatch("ekf_update: observation dimension");
  UpdateResult out;
  out.lin.obs_mat = model.obs_jac(k, prior.mean);
  const Vector h_pred = model.obs(k, prior.mean);
  out.lin.obs_off = h_pred - out.lin.obs_mat * prior.mean;
  out.lin.innov = obs_residual(model, k, prior.mean, y);
  out.lin.innov_cov =
      out.lin.obs_mat * prior.cov * out.lin.obs_mat.transpose() + model.obs_cov(k);
  const CholPsd s_factor = chol_psd(out.lin.innov_cov);
  out.lin.gain = (s_factor.solve(out.lin.obs_mat * prior.cov)).transpose();
  out.state.mean = prior.mean + out.lin.gain * out.lin.innov;
  out.state.cov = detail::repaired(
      prior.cov - out.lin.gain * out.lin.innov_cov * out.lin.gain.transpose());
  out.state.loglik = prior.loglik + mvn_logpdf_residual(out.lin.innov, s_factor);
  return out;
}

// Observation linearization at the current (updated) mean.
inline std::pair<Matrix, Vector> relinearize(const FilterState& state, const GaussianSsm& model,
                                             int k) {
  Matrix h = model.obs_jac(k, state.mean);
  Vector off = model.obs(k, state.mean) - h * state.mean;
  return {std::move(h), std::move(off)};
}

namespace detail {
inline void require_linear(const GaussianSsm& model) {
  Rng probe(0x5eeded);
  Vector x0(model.state_dim);
  for (int i = 0; i < model.state_dim; ++i) x0(i) = probe.normal();
  const Matrix a0 = model.drift_jac(0, x0);
  const Matrix h0 = model.obs_jac(0, x0);
  for (int trial = 0; trial < 3; ++trial) {
    Vector x(model.state_dim);
    for (int i = 0; i < model.state_dim; ++i) x(i) = 10.0 * probe.normal();
    if ((model.drift_jac(0, x) - a0).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + a0.cwiseAbs().maxCoeff()) ||
        (model.obs_jac(0, x) - h0).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + h0.cwiseAbs().maxCoeff()))
      throw NonLinearModel("kf_loglik: model Jacobians vary across states");
  }
}
}  // namespace detail

// Exact marginal log-likelihood for (affine-)linear Gaussian models; the
// library's ground-truth oracle.
inline double kf_loglik(const GaussianSsm& model, const Dataset& data) {
  detail::require_linear(model);
  FilterState state{model.init.mean, model.init.cov, 0.0};
  for (int k = 0; k <= data.horizon(); ++k) {
    if (k > 0) state = ekf_predict(state, model, k - 1).state;
    state = ekf_update(state, model, k, data.obs[k]).state;
  }
  return state.loglik;
}

// Filtered means/covariances (and exact-for-linear loglik) over a dataset.
struct FilterTrack {
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  double loglik = 0.0;
};

inline FilterTrack ekf_track(const GaussianSsm& model, const Dataset& data) {
  FilterTrack track;
  FilterState state{model.init.mean, model.init.cov, 0.0};
  for (int k = 0; k <= data.horizon(); ++k) {
    if (k > 0) state = ekf_predict(state, model, k - 1).state;
    state = ekf_update(state, model, k, data.obs[k]).state;
    track.means.push_back(state.mean);
    track.covs.push_back(state.cov);
  }
  track.loglik = state.loglik;
  return track;
}

// Extended RTS smoothed mean of x_k given y_{k:k+l}, starting from a prior
// over x_k. Single forward-backward pass; the smoothed mean serves as a
// mode proxy for the twisting construction.
inline Vector rts_smoothed_mean(const GaussianSsm& model, const Gaussian& prior_k, int k,
                                const std::vector<Vector>& obs_window) {
  const int l = static_cast<int>(obs_window.size()) - 1;
  if (l < 0) throw InvalidParameter("rts_smoothed_mean: empty observation window");
  std::vector<FilterState> updated;
  std::vector<FilterState> predicted;  // prior at k+s (before update)
  std::vector<Matrix> drift_mats;      // Jacobian used for step k+s -> k+s+1
  FilterState state{prior_k.mean, prior_k.cov, 0.0};
  for (int s = 0; s <= l; ++s) {
    if (s > 0) {
      PredictResult pr = ekf_predict(state, model, k + s - 1);
      drift_mats.push_back(pr.drift_mat);
      state = pr.state;
    }
    predicted.push_back(state);
    state = ekf_update(state, model, k + s, obs_window[s]).state;
    updated.push_back(state);
  }
  Vector smoothed = updated[l].mean;
  for (int s = l - 1; s >= 0; --s) {
    const CholPsd pred_factor = chol_psd(predicted[s + 1].cov);
    const Matrix gain =
        (pred_factor.solve(drift_mats[s] * updated[s].cov)).transpose();
    smoothed = updated[s].mean + gain * (smoothed - predicted[s + 1].mean);
  }
  return smoothed;
}

}  // namespace twistpf

#pragma once

#include <cstdint>
#include <vector>

#include "twistpf/kalman.hpp"
#include "twistpf/resample.hpp"
#include "twistpf/ssm.hpp"

namespace twistpf {

// Ancestral-line access handed to proposals. Every proposal implemented
// here depends on the line only through the most recent state, but the
// hook for deeper history is part of the interface.
struct Line {
  const Vector* latest = nullptr;
  std::function<const Vector&(int steps_back)> back{};

  const Vector& state() const { return *latest; }
};

struct Proposal {
  enum class Kind { bootstrap, ekf_local };
  Kind kind = Kind::bootstrap;
  // line is null at k = 0
  std::function<Vector(int k, const Line* line, const Vector& y, Rng& rng)> sample;
  std::function<double(int k, const Line* line, const Vector& y, const Vector& x)> logpdf;
};

inline Proposal bootstrap_proposal(const GaussianSsm& model) {
  Proposal p;
  p.kind = Proposal::Kind::bootstrap;
  p.sample = [&model](int k, const Line* line, const Vector&, Rng& rng) -> Vector {
    if (k == 0) return mvn_sample(rng, model.init);
    return mvn_sample(rng, Gaussian(model.drift(k - 1, line->state()), model.drift_cov(k - 1)));
  };
  p.logpdf = [&model](int k, const Line* line, const Vector&, const Vector& x) -> double {
    if (k == 0) return mvn_logpdf(x, model.init);
    return mvn_logpdf(x, Gaussian(model.drift(k - 1, line->state()), model.drift_cov(k - 1)));
  };
  return p;
}

namespace detail {
inline Gaussian ekf_proposal_density(const GaussianSsm& model, int k, const Line* line,
                                     const Vector& y) {
  FilterState state;
  if (k == 0) {
    state = {model.init.mean, model.init.cov, 0.0};
  } else {
    state = {line->state(), Matrix::Zero(model.state_dim, model.state_dim), 0.0};
    state = ekf_predict(state, model, k - 1).state;
  }
  state = ekf_update(state, model, k, y).state;
  return Gaussian(state.mean, state.cov);
}
}  // namespace detail

// One-step EKF approximation of p(x_k | x_{k-1}, y_k): predict from a point
// mass at the ancestor, update with the current observation.
inline Proposal ekf_proposal(const GaussianSsm& model) {
  Proposal p;
  p.kind = Proposal::Kind::ekf_local;
  p.sample = [&model](int k, const Line* line, const Vector& y, Rng& rng) -> Vector {
    return mvn_sample(rng, detail::ekf_proposal_density(model, k, line, y));
  };
  p.logpdf = [&model](int k, const Line* line, const Vector& y, const Vector& x) -> double {
    return mvn_logpdf(x, detail::ekf_proposal_density(model, k, line, y));
  };
  return p;
}

enum class ResampleScheme { multinomial, systematic };

struct PfStep {
  std::vector<Vector> states;
  std::vector<double> log_w;
  AncestorVector ancestors;  // empty at k = 0
};

struct PfResult {
  std::vector<double> log_z;    // running estimate, one entry per step
  std::vector<PfStep> history;  // present when requested
};

// Standard particle filter with per-step resampling. Per-particle RNG
// substreams are derived from (seed, k, i) so the result is independent of
// any execution schedule.
inline PfResult pf_run(const GaussianSsm& model, const Proposal& proposal,
                       ResampleScheme resampler, const Dataset& data, int n, Rng& rng,
                       bool keep_history = false) {
  if (n < 1) throw InvalidParameter("pf_run: need at least one particle");
  const int t = data.horizon();
  const std::uint64_t run_seed = rng.next_u64();
  PfResult result;
  result.log_z.reserve(t + 1);

  std::vector<Vector> states(n), prev_states(n);
  std::vector<double> log_w(n), log_w_prev(n);

  auto weigh = [&](int k, const Vector& x, const Line* line, const CholPsd& r_factor) {
    double lw = log_obs_density(model, k, x, data.obs[k], r_factor);
    if (proposal.kind == Proposal::Kind::bootstrap) return lw;  // f/q cancels
    if (k == 0) {
      lw += mvn_logpdf(x, model.init) - proposal.logpdf(0, nullptr, data.obs[0], x);
    } else {
      lw += log_trans_density(model, k, line->state(), x) -
            proposal.logpdf(k, line, data.obs[k], x);
    }
    return lw;
  };

  {
    const CholPsd r_factor = chol_psd(model.obs_cov(0));
    for (int i = 0; i < n; ++i) {
      Rng part = substream(run_seed, 1, 0, static_cast<std::uint64_t>(i));
      states[i] = proposal.sample(0, nullptr, data.obs[0], part);
      log_w[i] = weigh(0, states[i], nullptr, r_factor);
    }
    if (std::all_of(log_w.begin(), log_w.end(), [](double w) { return w == kNegInf; }))
      throw ParticleDegeneracy("pf_run: all weights zero at step 0");
    result.log_z.push_back(log_sum_exp(log_w) - std::log(static_cast<double>(n)));
    if (keep_history) result.history.push_back({states, log_w, {}});
  }

  for (int k = 1; k <= t; ++k) {
    std::swap(prev_states, states);
    std::swap(log_w_prev, log_w);

    Rng res = substream(run_seed, 2, static_cast<std::uint64_t>(k));
    AncestorVector ancestors;
    if (resampler == ResampleScheme::multinomial) {
      std::vector<double> u(n);
      for (int i = 0; i < n; ++i) u[i] = res.uniform();
      ancestors = multinomial_map(u, WeightVector{log_w_prev});
    } else {
      ancestors = systematic_map(res.uniform(), WeightVector{log_w_prev});
    }

    const CholPsd r_factor = chol_psd(model.obs_cov(k));
    for (int i = 0; i < n; ++i) {
      Rng part = substream(run_seed, 1, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
      Line line{&prev_states[ancestors[i]]};
      states[i] = proposal.sample(k, &line, data.obs[k], part);
      log_w[i] = weigh(k, states[i], &line, r_factor);
    }
    if (std::all_of(log_w.begin(), log_w.end(), [](double w) { return w == kNegInf; }))
      throw ParticleDegeneracy("pf_run: all weights zero at step " + std::to_string(k));
    result.log_z.push_back(result.log_z.back() + log_sum_exp(log_w) -
                           std::log(static_cast<double>(n)));
    if (keep_history) result.history.push_back({states, log_w, ancestors});
  }
  return result;
}

}  // namespace twistpf

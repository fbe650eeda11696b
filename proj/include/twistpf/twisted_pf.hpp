#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "twistpf/smc.hpp"
#include "twistpf/twist.hpp"

namespace twistpf {

enum class TwistScheme { local, mode, unit };

struct TwistedResampleDraw {
  int slot = 0;             // index whose proposal is twisted (S_k)
  int chosen_ancestor = 0;  // ancestor selected for the slot (J_{k-1})
  std::vector<double> u;    // resampling randomness (size n or 1)
  AncestorVector ancestors;
};

namespace detail {

inline int sample_discrete_log(const std::vector<double>& log_p, Rng& rng) {
  double total = kNegInf;
  for (double lp : log_p) total = std::max(total, lp);
  if (total == kNegInf) throw DegenerateWeights("sample_discrete_log: all mass zero");
  double norm = 0.0;
  for (double lp : log_p) norm += std::exp(lp - total);
  const double u = rng.uniform_oc() * norm;
  double acc = 0.0;
  int last_positive = -1;
  for (std::size_t j = 0; j < log_p.size(); ++j) {
    const double p = std::exp(log_p[j] - total);
    if (p > 0.0) last_positive = static_cast<int>(j);
    acc += p;
    if (u <= acc && p > 0.0) return static_cast<int>(j);
  }
  return last_positive;
}

// uniform draw from the half-open interval (lo, hi]
inline double uniform_on(double lo, double hi, Rng& rng) {
  return hi - rng.uniform() * (hi - lo);
}

}  // namespace detail

// Twisted multinomial resampling: slot uniform, slot-ancestor J with
// probability proportional to w^j V^j, the slot's uniform confined to J's
// weight interval.
inline TwistedResampleDraw twisted_multinomial_draw(const std::vector<double>& log_w,
                                                    const std::vector<double>& log_v, Rng& rng) {
  const std::size_t n = log_w.size();
  if (log_v.size() != n) throw ShapeMismatch("twisted_multinomial_draw: |w| != |V|");
  TwistedResampleDraw draw;
  draw.slot = static_cast<int>(rng.uniform_index(n));
  std::vector<double> log_wv(n);
  for (std::size_t j = 0; j < n; ++j) log_wv[j] = log_w[j] + log_v[j];
  draw.chosen_ancestor = detail::sample_discrete_log(log_wv, rng);
  const std::vector<double> d = cumulative(WeightVector{log_w});
  draw.u.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<int>(i) == draw.slot)
      draw.u[i] = detail::uniform_on(d[draw.chosen_ancestor], d[draw.chosen_ancestor + 1], rng);
    else
      draw.u[i] = rng.uniform();
  }
  draw.ancestors = multinomial_map(draw.u, WeightVector{log_w});
  return draw;
}

// Twisted systematic resampling. With I^{s,j} the part of [0,1] that sends
// slot s to ancestor j, the slot is drawn with probability proportional to
// sum_j |I^{s,j}| V^j, the ancestor proportional to |I^{s,j}| V^j, and the
// single uniform confined to I^{s,j}.
inline TwistedResampleDraw twisted_systematic_draw(const std::vector<double>& log_w,
                                                   const std::vector<double>& log_v, Rng& rng) {
  const std::size_t n = log_w.size();
  if (log_v.size() != n) throw ShapeMismatch("twisted_systematic_draw: |w| != |V|");
  const std::vector<double> d = cumulative(WeightVector{log_w});
  const double dn = static_cast<double>(n);

  // interval (lo, hi] of u values sending slot s (0-based) to ancestor j
  auto overlap = [&](std::size_t s, std::size_t j) {
    const double lo = std::max(dn * d[j] - static_cast<double>(s), 0.0);
    const double hi = std::min(dn * d[j + 1] - static_cast<double>(s), 1.0);
    return std::pair<double, double>{lo, hi};
  };

  // Ancestors overlapping slot s form a contiguous, nondecreasing window in
  // j, so a single sweep computes all slot probabilities in O(n).
  std::vector<double> log_p_slot(n, kNegInf);
  std::vector<double> terms;
  std::size_t j_start = 0;
  for (std::size_t s = 0; s < n; ++s) {
    while (j_start < n && dn * d[j_start + 1] <= static_cast<double>(s)) ++j_start;
    terms.clear();
    double m = kNegInf;
    for (std::size_t j = j_start; j < n && dn * d[j] < static_cast<double>(s) + 1.0; ++j) {
      const auto [lo, hi] = overlap(s, j);
      if (hi > lo && log_v[j] > kNegInf) {
        terms.push_back(std::log(hi - lo) + log_v[j]);
        m = std::max(m, terms.back());
      }
    }
    if (!terms.empty()) {
      double acc = 0.0;
      for (double tval : terms) acc += std::exp(tval - m);
      log_p_slot[s] = m + std::log(acc);
    }
  }

  TwistedResampleDraw draw;
  draw.slot = detail::sample_discrete_log(log_p_slot, rng);
  std::vector<double> log_p_anc(n, kNegInf);
  for (std::size_t j = 0; j < n; ++j) {
    const auto [lo, hi] = overlap(draw.slot, j);
    if (hi > lo) log_p_anc[j] = std::log(hi - lo) + log_v[j];
  }
  draw.chosen_ancestor = detail::sample_discrete_log(log_p_anc, rng);
  const auto [lo, hi] = overlap(draw.slot, draw.chosen_ancestor);
  draw.u = {detail::uniform_on(lo, hi, rng)};
  draw.ancestors = systematic_map(draw.u[0], WeightVector{log_w});
  return draw;
}

struct TwistedRunRecord {
  std::vector<double> log_z_twist;  // running twisted estimate per step
  std::vector<double> log_z_plain;  // standard recursion on the same stream
  std::vector<double> log_phi;      // per-step correction factors
  double log_int_psi0 = 0.0;        // log of int psi_0 q_0
  std::vector<std::vector<double>> log_w;    // per step, per particle
  std::vector<std::vector<double>> log_v;    // log V_k, for k = 0..t-1
  std::vector<std::vector<double>> log_psi;  // psi_k at each realized line
  std::vector<AncestorVector> ancestors;     // per step k >= 1
  std::vector<std::vector<Vector>> states;   // kept when requested
  int fallback_count = 0;

  double loglik() const { return log_z_twist.back(); }
};

// Twisted particle filter for Gaussian models. The slot particle is
// proposed from the twisted proposal (product of the transition with the
// exponential-quadratic twist); all weights use the untwisted proposal
// density, and the estimate carries the per-step correction built from
// (sum W~, sum psi).
inline TwistedRunRecord tpf_run(const GaussianSsm& model, const Proposal& proposal,
                                TwistScheme twist_scheme, ResampleScheme resample_scheme, int l,
                                const Dataset& data, int n, Rng& rng, bool keep_states = false,
                                bool relinearize = true) {
  if (n < 1) throw InvalidParameter("tpf_run: need at least one particle");
  if (l < 0) throw InvalidParameter("tpf_run: negative lookahead");
  const int t = data.horizon();
  const std::uint64_t run_seed = rng.next_u64();
  const double log_n = std::log(static_cast<double>(n));
  const int d = model.state_dim;

  TwistedRunRecord rec;
  auto window = [&](int k) {
    const int lk = std::min(l, t - k);
    return std::vector<Vector>(data.obs.begin() + k, data.obs.begin() + k + lk + 1);
  };

  std::vector<Vector> states(n), prev_states(n);
  std::vector<ExpQuadTwist> twists;

  // k = 0: one shared twist built from the prior EKF pass
  ExpQuadTwist twist0 = (twist_scheme == TwistScheme::unit)
                            ? ExpQuadTwist::unit(d)
                            : prior_ekf_twist(model, window(0), relinearize);
  const TwistProduct prod0 = twist_product(twist0, model.init.cov, model.init.mean);
  rec.log_int_psi0 = prod0.log_integral;

  Rng slot_rng = substream(run_seed, 2, 0);
  const int s0 = static_cast<int>(slot_rng.uniform_index(n));
  std::vector<double> log_w(n), log_psi_now(n);
  {
    const CholPsd r_factor = chol_psd(model.obs_cov(0));
    const Gaussian slot_density(prod0.mean, prod0.cov);
    for (int i = 0; i < n; ++i) {
      Rng part = substream(run_seed, 1, 0, static_cast<std::uint64_t>(i));
      states[i] = (i == s0) ? mvn_sample(part, slot_density)
                            : proposal.sample(0, nullptr, data.obs[0], part);
      log_w[i] = log_obs_density(model, 0, states[i], data.obs[0], r_factor);
      if (proposal.kind != Proposal::Kind::bootstrap)
        log_w[i] += mvn_logpdf(states[i], model.init) -
                    proposal.logpdf(0, nullptr, data.obs[0], states[i]);
      log_psi_now[i] = log_psi(model, proposal, 0, nullptr, data.obs[0], states[i], twist0);
    }
  }
  double lsw = log_sum_exp(log_w);
  double lspsi = log_sum_exp(log_psi_now);
  rec.log_z_twist.push_back(rec.log_int_psi0 + lsw - lspsi);
  rec.log_z_plain.push_back(lsw - log_n);
  rec.log_phi.push_back(rec.log_int_psi0 - (lspsi - log_n));
  rec.log_w.push_back(log_w);
  rec.log_psi.push_back(log_psi_now);
  if (keep_states) rec.states.push_back(states);

  for (int k = 1; k <= t; ++k) {
    std::swap(prev_states, states);
    const std::vector<double> log_w_prev = rec.log_w.back();

    // twists are functions of the pre-resampling particles
    const std::vector<Vector> win = window(k);
    switch (twist_scheme) {
      case TwistScheme::unit:
        twists.assign(n, ExpQuadTwist::unit(d));
        break;
      case TwistScheme::local:
        twists = local_ekf_twists(model, k, prev_states, win, relinearize, &rec.fallback_count);
        break;
      case TwistScheme::mode:
        twists = mode_ekf_twists(model, k, prev_states, win, relinearize);
        break;
    }

    const Matrix q_prev = model.drift_cov(k - 1);
    std::vector<TwistProduct> products(n);
    std::vector<double> log_v(n);
    for (int i = 0; i < n; ++i) {
      products[i] = twist_product(twists[i], q_prev, model.drift(k - 1, prev_states[i]));
      log_v[i] = products[i].log_integral;
    }
    rec.log_v.push_back(log_v);

    Rng res = substream(run_seed, 2, static_cast<std::uint64_t>(k));
    const TwistedResampleDraw draw = (resample_scheme == ResampleScheme::multinomial)
                                         ? twisted_multinomial_draw(log_w_prev, log_v, res)
                                         : twisted_systematic_draw(log_w_prev, log_v, res);
    rec.ancestors.push_back(draw.ancestors);

    const CholPsd r_factor = chol_psd(model.obs_cov(k));
    std::vector<double> log_w_new(n);
    for (int i = 0; i < n; ++i) {
      Rng part = substream(run_seed, 1, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
      const int a = draw.ancestors[i];
      Line line{&prev_states[a]};
      if (i == draw.slot) {
        states[i] = mvn_sample(part, Gaussian(products[a].mean, products[a].cov));
      } else {
        states[i] = proposal.sample(k, &line, data.obs[k], part);
      }
      if (proposal.kind == Proposal::Kind::bootstrap) {
        log_w_new[i] = log_obs_density(model, k, states[i], data.obs[k], r_factor);
      } else {
        log_w_new[i] = log_obs_density(model, k, states[i], data.obs[k], r_factor) +
                       log_trans_density(model, k, prev_states[a], states[i]) -
                       proposal.logpdf(k, &line, data.obs[k], states[i]);
      }
      log_psi_now[i] = log_psi(model, proposal, k, &line, data.obs[k], states[i], twists[a]);
    }
    if (std::all_of(log_w_new.begin(), log_w_new.end(), [](double w) { return w == kNegInf; }))
      throw ParticleDegeneracy("tpf_run: all weights zero at step " + std::to_string(k));

    std::vector<double> log_w_twisted(n);
    for (int i = 0; i < n; ++i) log_w_twisted[i] = log_w_prev[i] + log_v[i];

    const double lsw_new = log_sum_exp(log_w_new);
    const double lsw_prev = log_sum_exp(log_w_prev);
    const double lsw_twisted = log_sum_exp(log_w_twisted);
    lspsi = log_sum_exp(log_psi_now);

    rec.log_z_twist.push_back(rec.log_z_twist.back() + lsw_new - lsw_prev + lsw_twisted - lspsi);
    rec.log_z_plain.push_back(rec.log_z_plain.back() + lsw_new - log_n);
    rec.log_phi.push_back(lsw_twisted - lsw_prev - (lspsi - log_n));
    rec.log_w.push_back(log_w_new);
    rec.log_psi.push_back(log_psi_now);
    if (keep_states) rec.states.push_back(states);

#ifndef NDEBUG
    {
      double corr = 0.0;
      for (double lp : rec.log_phi) corr += lp;
      assert(std::abs(rec.log_z_twist.back() - (rec.log_z_plain.back() + corr)) < 1e-10);
    }
#endif
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Generic twisted filter for scalar-state models. The twisting functions are
// arbitrary positive densities evaluated pointwise; the one-step integrals
// V~ and the twisted proposal are handled by quadrature and grid inversion
// instead of the Gaussian closed forms. Used to cross-check the analytic
// path; not a production code path.
// ---------------------------------------------------------------------------
namespace generic1d {

struct QuadGrid {
  double lo = -40.0;
  double hi = 40.0;
  int nodes = 4001;
};

struct GenericTwist {
  // log phi_0(x)
  std::function<double(double)> phi0;
  // per-particle log phi_k(x) evaluators, built from pre-resampling states
  std::function<std::vector<std::function<double(double)>>(int k,
                                                           const std::vector<Vector>& prev)>
      build;
  QuadGrid grid;
};

namespace detail {

// log of the trapezoid integral of exp(f) over the grid
inline double log_trapz_exp(const std::function<double(double)>& f, const QuadGrid& g) {
  const double step = (g.hi - g.lo) / (g.nodes - 1);
  double m = kNegInf;
  std::vector<double> vals(g.nodes);
  for (int j = 0; j < g.nodes; ++j) {
    vals[j] = f(g.lo + j * step);
    m = std::max(m, vals[j]);
  }
  if (m == kNegInf) throw DegenerateWeights("log_trapz_exp: integrand vanishes");
  double acc = 0.0;
  for (int j = 0; j < g.nodes; ++j)
    acc += std::exp(vals[j] - m) * ((j == 0 || j == g.nodes - 1) ? 0.5 : 1.0);
  return m + std::log(acc * step);
}

// inverse-CDF draw from the density proportional to exp(f) on the grid
inline double grid_sample(const std::function<double(double)>& f, const QuadGrid& g, Rng& rng) {
  const double step = (g.hi - g.lo) / (g.nodes - 1);
  std::vector<double> vals(g.nodes);
  double m = kNegInf;
  for (int j = 0; j < g.nodes; ++j) {
    vals[j] = f(g.lo + j * step);
    m = std::max(m, vals[j]);
  }
  std::vector<double> cum(g.nodes, 0.0);
  for (int j = 1; j < g.nodes; ++j)
    cum[j] = cum[j - 1] + 0.5 * (std::exp(vals[j] - m) + std::exp(vals[j - 1] - m));
  const double u = rng.uniform_oc() * cum.back();
  const auto it = std::lower_bound(cum.begin() + 1, cum.end(), u);
  const int j = static_cast<int>(it - cum.begin());
  const double seg = cum[j] - cum[j - 1];
  const double frac = seg > 0.0 ? (u - cum[j - 1]) / seg : 0.5;
  return g.lo + (j - 1 + frac) * step;
}

}  // namespace detail

// Twisted filter with quadrature-based integrals (Gaussian transition, free
// twisting functions); scalar state only.
inline TwistedRunRecord tpf_run_generic(const GaussianSsm& model, const Proposal& proposal,
                                        const GenericTwist& twist, ResampleScheme resample_scheme,
                                        const Dataset& data, int n, Rng& rng) {
  if (model.state_dim != 1)
    throw InvalidParameter("tpf_run_generic: scalar-state models only");
  const int t = data.horizon();
  const std::uint64_t run_seed = rng.next_u64();
  const double log_n = std::log(static_cast<double>(n));
  TwistedRunRecord rec;

  auto scalar = [](double v) { return (Vector(1) << v).finished(); };

  std::vector<Vector> states(n), prev_states(n);
  std::vector<double> log_w(n), log_psi_now(n);

  auto log_mu0 = [&](double x) { return mvn_logpdf(scalar(x), model.init); };
  rec.log_int_psi0 =
      detail::log_trapz_exp([&](double x) { return log_mu0(x) + twist.phi0(x); }, twist.grid);

  Rng slot_rng = substream(run_seed, 2, 0);
  const int s0 = static_cast<int>(slot_rng.uniform_index(n));
  for (int i = 0; i < n; ++i) {
    Rng part = substream(run_seed, 1, 0, static_cast<std::uint64_t>(i));
    if (i == s0) {
      states[i] = scalar(detail::grid_sample(
          [&](double x) { return log_mu0(x) + twist.phi0(x); }, twist.grid, part));
    } else {
      states[i] = proposal.sample(0, nullptr, data.obs[0], part);
    }
    const double lq = proposal.logpdf(0, nullptr, data.obs[0], states[i]);
    log_w[i] = log_obs_density(model, 0, states[i], data.obs[0]) + log_mu0(states[i](0)) - lq;
    log_psi_now[i] = log_mu0(states[i](0)) + twist.phi0(states[i](0)) - lq;
  }
  double lsw = log_sum_exp(log_w);
  double lspsi = log_sum_exp(log_psi_now);
  rec.log_z_twist.push_back(rec.log_int_psi0 + lsw - lspsi);
  rec.log_z_plain.push_back(lsw - log_n);
  rec.log_phi.push_back(rec.log_int_psi0 - (lspsi - log_n));
  rec.log_w.push_back(log_w);
  rec.log_psi.push_back(log_psi_now);

  for (int k = 1; k <= t; ++k) {
    std::swap(prev_states, states);
    const std::vector<double> log_w_prev = rec.log_w.back();
    const auto phis = twist.build(k, prev_states);

    std::vector<double> log_v(n);
    for (int i = 0; i < n; ++i) {
      const double mean = model.drift(k - 1, prev_states[i])(0);
      const double var = model.drift_cov(k - 1)(0, 0);
      log_v[i] = detail::log_trapz_exp(
          [&](double x) {
            return phis[i](x) - 0.5 * (kLog2Pi + std::log(var) + (x - mean) * (x - mean) / var);
          },
          twist.grid);
    }
    rec.log_v.push_back(log_v);

    Rng res = substream(run_seed, 2, static_cast<std::uint64_t>(k));
    const TwistedResampleDraw draw = (resample_scheme == ResampleScheme::multinomial)
                                         ? twisted_multinomial_draw(log_w_prev, log_v, res)
                                         : twisted_systematic_draw(log_w_prev, log_v, res);
    rec.ancestors.push_back(draw.ancestors);

    std::vector<double> log_w_new(n);
    for (int i = 0; i < n; ++i) {
      Rng part = substream(run_seed, 1, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
      const int a = draw.ancestors[i];
      Line line{&prev_states[a]};
      if (i == draw.slot) {
        const double mean = model.drift(k - 1, prev_states[a])(0);
        const double var = model.drift_cov(k - 1)(0, 0);
        states[i] = scalar(detail::grid_sample(
            [&](double x) {
              return phis[a](x) -
                     0.5 * (kLog2Pi + std::log(var) + (x - mean) * (x - mean) / var);
            },
            twist.grid, part));
      } else {
        states[i] = proposal.sample(k, &line, data.obs[k], part);
      }
      const double lq = proposal.logpdf(k, &line, data.obs[k], states[i]);
      const double lf = log_trans_density(model, k, prev_states[a], states[i]);
      log_w_new[i] = log_obs_density(model, k, states[i], data.obs[k]) + lf - lq;
      log_psi_now[i] = lf + phis[a](states[i](0)) - lq;
    }

    std::vector<double> log_w_twisted(n);
    for (int i = 0; i < n; ++i) log_w_twisted[i] = log_w_prev[i] + log_v[i];
    const double lsw_new = log_sum_exp(log_w_new);
    const double lsw_prev = log_sum_exp(log_w_prev);
    const double lsw_twisted = log_sum_exp(log_w_twisted);
    lspsi = log_sum_exp(log_psi_now);
    rec.log_z_twist.push_back(rec.log_z_twist.back() + lsw_new - lsw_prev + lsw_twisted - lspsi);
    rec.log_z_plain.push_back(rec.log_z_plain.back() + lsw_new - log_n);
    rec.log_phi.push_back(lsw_twisted - lsw_prev - (lspsi - log_n));
    rec.log_w.push_back(log_w_new);
    rec.log_psi.push_back(log_psi_now);
  }
  return rec;
}

}  // namespace generic1d

// Per-step correction factors recomputed from the stored run summaries:
// log phi_0 = log int psi_0 q_0 - log mean psi_0, and for k >= 1
// log phi_k = log sum W~_{k-1} - log sum W_{k-1} - log mean psi_k.
inline std::vector<double> correction_factors(const TwistedRunRecord& rec) {
  const double log_n = std::log(static_cast<double>(rec.log_w.front().size()));
  std::vector<double> phi;
  phi.reserve(rec.log_psi.size());
  phi.push_back(rec.log_int_psi0 - (log_sum_exp(rec.log_psi[0]) - log_n));
  for (std::size_t k = 1; k < rec.log_psi.size(); ++k) {
    std::vector<double> log_w_twisted(rec.log_w[k - 1].size());
    for (std::size_t i = 0; i < log_w_twisted.size(); ++i)
      log_w_twisted[i] = rec.log_w[k - 1][i] + rec.log_v[k - 1][i];
    phi.push_back(log_sum_exp(log_w_twisted) - log_sum_exp(rec.log_w[k - 1]) -
                  (log_sum_exp(rec.log_psi[k]) - log_n));
  }
  return phi;
}

}  // namespace twistpf

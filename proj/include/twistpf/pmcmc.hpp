#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "twistpf/gauss.hpp"
#include "twistpf/ssm.hpp"

namespace twistpf {

enum class PriorFamily { inverse_gamma, gamma, normal };

// Families cover the priors used in the experiments: inverse-gamma(shape,
// scale) and gamma(shape, scale) for variance-type parameters, normal(mean,
// var) for offsets.
struct PriorTerm {
  PriorFamily family = PriorFamily::normal;
  double a = 0.0;  // shape / shape / mean
  double b = 1.0;  // scale / scale / variance
};

struct PriorSpec {
  std::vector<PriorTerm> terms;
};

inline double prior_term_logpdf(const PriorTerm& p, double x) {
  switch (p.family) {
    case PriorFamily::inverse_gamma:
      if (x <= 0.0) return kNegInf;
      return p.a * std::log(p.b) - std::lgamma(p.a) - (p.a + 1.0) * std::log(x) - p.b / x;
    case PriorFamily::gamma:
      if (x <= 0.0) return kNegInf;
      return -p.a * std::log(p.b) - std::lgamma(p.a) + (p.a - 1.0) * std::log(x) - x / p.b;
    case PriorFamily::normal:
      return -0.5 * (kLog2Pi + std::log(p.b)) - 0.5 * (x - p.a) * (x - p.a) / p.b;
  }
  return kNegInf;
}

inline double prior_logpdf(const PriorSpec& spec, const Vector& theta) {
  if (static_cast<Eigen::Index>(spec.terms.size()) != theta.size())
    throw ShapeMismatch("prior_logpdf: dimension mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double lp = prior_term_logpdf(spec.terms[i], theta(i));
    if (lp == kNegInf) return kNegInf;
    acc += lp;
  }
  return acc;
}

inline Vector sample_prior(const PriorSpec& spec, Rng& rng) {
  Vector theta(spec.terms.size());
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    const PriorTerm& p = spec.terms[i];
    switch (p.family) {
      case PriorFamily::inverse_gamma:
        // X ~ Gamma(a, rate b) => 1/X ~ IG(a, scale b)
        theta(i) = 1.0 / (rng.gamma(p.a) / p.b);
        break;
      case PriorFamily::gamma:
        theta(i) = rng.gamma(p.a) * p.b;
        break;
      case PriorFamily::normal:
        theta(i) = p.a + std::sqrt(p.b) * rng.normal();
        break;
    }
  }
  return theta;
}

struct MhConfig {
  int iterations = 1000;
  int burn_in = 0;
  std::vector<std::vector<int>> blocks;  // partition of parameter indices (0-based)
  std::vector<Matrix> proposal_cov;      // one per block
  Vector theta0;                         // empty: draw from the prior
};

struct Chain {
  Matrix draws;                                 // iterations x d
  std::vector<double> log_z;                    // per iteration
  std::vector<std::vector<std::uint8_t>> accepted;  // per iteration, per block
  int estimator_failures = 0;
};

using Estimator = std::function<double(const Vector& theta, const Dataset& data, Rng& rng)>;

namespace detail {
inline void validate_blocks(const MhConfig& cfg, Eigen::Index dim) {
  std::vector<int> seen(dim, 0);
  if (cfg.blocks.size() != cfg.proposal_cov.size())
    throw ShapeMismatch("pmmh: blocks/proposal_cov count mismatch");
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    const auto& block = cfg.blocks[b];
    if (cfg.proposal_cov[b].rows() != static_cast<Eigen::Index>(block.size()))
      throw ShapeMismatch("pmmh: proposal covariance does not match block size");
    for (int idx : block) {
      if (idx < 0 || idx >= dim || seen[idx]++) throw InvalidParameter("pmmh: blocks must partition the parameters");
    }
  }
  for (int c : seen)
    if (!c) throw InvalidParameter("pmmh: blocks must partition the parameters");
}
}  // namespace detail

// Particle marginal Metropolis-Hastings with blockwise Gaussian random-walk
// proposals (Metropolis-within-Gibbs when more than one block). Parameters
// live in natural space; moves outside the prior support are rejected
// without running the estimator. Estimator failures count as rejections and
// are reported.
inline Chain pmmh(const Estimator& estimator, const PriorSpec& prior, const MhConfig& cfg,
                  const Dataset& data, Rng& rng) {
  const Eigen::Index dim = static_cast<Eigen::Index>(prior.terms.size());
  detail::validate_blocks(cfg, dim);
  if (cfg.iterations < 1) throw InvalidParameter("pmmh: need at least one iteration");

  std::vector<CholPsd> block_factors;
  block_factors.reserve(cfg.proposal_cov.size());
  for (const Matrix& c : cfg.proposal_cov) block_factors.push_back(chol_psd(c));

  Chain chain;
  chain.draws.resize(cfg.iterations, dim);
  chain.log_z.reserve(cfg.iterations);
  chain.accepted.reserve(cfg.iterations);

  Vector theta;
  double log_prior = kNegInf;
  double log_z = kNegInf;
  if (cfg.theta0.size() > 0) {
    theta = cfg.theta0;
    log_prior = prior_logpdf(prior, theta);
    if (log_prior == kNegInf) throw InvalidParameter("pmmh: theta0 outside prior support");
    log_z = estimator(theta, data, rng);
    if (!std::isfinite(log_z)) throw EstimatorFailure("pmmh: estimator failed at theta0");
  } else {
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      theta = sample_prior(prior, rng);
      log_prior = prior_logpdf(prior, theta);
      if (log_prior == kNegInf) continue;
      try {
        log_z = estimator(theta, data, rng);
        ok = std::isfinite(log_z);
      } catch (const std::runtime_error&) {
        ok = false;
      }
      if (!ok) ++chain.estimator_failures;
    }
    if (!ok) throw EstimatorFailure("pmmh: no valid initial point found under the prior");
  }

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<std::uint8_t> acc(cfg.blocks.size(), 0);
    for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
      Vector proposal_theta = theta;
      Vector step(cfg.blocks[b].size());
      for (Eigen::Index j = 0; j < step.size(); ++j) step(j) = rng.normal();
      step = block_factors[b].lower * step;
      for (std::size_t j = 0; j < cfg.blocks[b].size(); ++j)
        proposal_theta(cfg.blocks[b][j]) += step(j);

      const double log_prior_prop = prior_logpdf(prior, proposal_theta);
      if (log_prior_prop == kNegInf) continue;  // reject without running the filter

      double log_z_prop;
      try {
        log_z_prop = estimator(proposal_theta, data, rng);
      } catch (const std::runtime_error&) {
        ++chain.estimator_failures;
        continue;
      }
      if (!std::isfinite(log_z_prop)) {
        ++chain.estimator_failures;
        continue;
      }
      // symmetric random walk: proposal-density ratio is one
      const double log_ratio = log_z_prop + log_prior_prop - log_z - log_prior;
      if (std::log(rng.uniform_oc()) < log_ratio) {
        theta = proposal_theta;
        log_prior = log_prior_prop;
        log_z = log_z_prop;
        acc[b] = 1;
      }
    }
    chain.draws.row(iter) = theta.transpose();
    chain.log_z.push_back(log_z);
    chain.accepted.push_back(std::move(acc));
  }
  return chain;
}

// Offline proposal tuning from a pilot chain: per-block empirical posterior
// covariance scaled by 2.38^2 / block_dim.
inline std::vector<Matrix> pilot_proposal_cov(const Matrix& draws,
                                              const std::vector<std::vector<int>>& blocks) {
  const Eigen::Index rows = draws.rows();
  if (rows < 2) throw TooFewSamples("pilot_proposal_cov: need at least two draws");
  const Vector mean = draws.colwise().mean();
  const Matrix centered = draws.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(rows - 1);
  std::vector<Matrix> out;
  out.reserve(blocks.size());
  for (const auto& block : blocks) {
    Matrix c(block.size(), block.size());
    for (std::size_t i = 0; i < block.size(); ++i)
      for (std::size_t j = 0; j < block.size(); ++j) c(i, j) = cov(block[i], block[j]);
    c *= 2.38 * 2.38 / static_cast<double>(block.size());
    c.diagonal().array() += 1e-12;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace twistpf

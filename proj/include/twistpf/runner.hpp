#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "twistpf/config.hpp"
#include "twistpf/csv.hpp"
#include "twistpf/diag.hpp"
#include "twistpf/kalman.hpp"
#include "twistpf/smc.hpp"
#include "twistpf/twisted_pf.hpp"

namespace twistpf {

inline std::vector<std::string> theta_names(const RunConfig& cfg) {
  if (cfg.model == "range_bearing") return {"q2", "sigma1_sq", "sigma2_sq"};
  if (cfg.model == "linear_gaussian") return {"q"};
  std::vector<std::string> names;
  for (std::size_t i = 0; i < cfg.lambda.size(); ++i) {
    names.push_back("lambda_" + std::to_string(i + 1));
    names.push_back("rho_" + std::to_string(i + 1));
  }
  names.push_back("q2");
  names.push_back("sigma2");
  return names;
}

inline double config_param(const RunConfig& cfg, const std::string& name) {
  for (const auto& [key, value] : cfg.params)
    if (key == name) return value;
  throw ConfigError("missing parameter: " + name);
}

// Ground-truth/current parameter vector in canonical Theta order.
inline Vector theta_from_config(const RunConfig& cfg) {
  if (cfg.model == "range_bearing") {
    Vector theta(3);
    theta << config_param(cfg, "q2"), config_param(cfg, "sigma1_sq"),
        config_param(cfg, "sigma2_sq");
    return theta;
  }
  if (cfg.model == "linear_gaussian") {
    Vector theta(1);
    theta << config_param(cfg, "q");
    return theta;
  }
  Vector theta(2 * cfg.lambda.size() + 2);
  for (std::size_t i = 0; i < cfg.lambda.size(); ++i) {
    theta(2 * i) = cfg.lambda[i];
    theta(2 * i + 1) = cfg.rho[i];
  }
  theta(2 * cfg.lambda.size()) = config_param(cfg, "q2");
  theta(2 * cfg.lambda.size() + 1) = config_param(cfg, "sigma2");
  return theta;
}

inline GaussianSsm model_from_theta(const RunConfig& cfg, const Vector& theta,
                                    const std::vector<std::vector<int>>& visibility = {}) {
  if (cfg.model == "range_bearing") {
    if (theta.size() != 3) throw ShapeMismatch("range_bearing expects 3 parameters");
    return range_bearing_model(theta(0), theta(1), theta(2), cfg.dt);
  }
  if (cfg.model == "linear_gaussian") {
    if (theta.size() != 1) throw ShapeMismatch("linear_gaussian expects 1 parameter");
    Matrix a(1, 1), q(1, 1), h(1, 1), r(1, 1), p0(1, 1);
    a << cfg.lin_a;
    q << theta(0);
    h << cfg.lin_h;
    r << cfg.lin_r;
    p0 << cfg.lin_p0;
    Vector nu0(1);
    nu0 << cfg.lin_nu0;
    return linear_gaussian_model(a, q, h, r, nu0, p0);
  }
  const std::size_t n_bs = cfg.lambda.size();
  if (theta.size() != static_cast<Eigen::Index>(2 * n_bs + 2))
    throw ShapeMismatch("rss expects 2 n_bs + 2 parameters");
  std::vector<double> lambdas(n_bs), rhos(n_bs);
  for (std::size_t i = 0; i < n_bs; ++i) {
    lambdas[i] = theta(2 * i);
    rhos[i] = theta(2 * i + 1);
  }
  std::vector<Eigen::Vector2d> stations;
  for (const auto& [x, y] : cfg.stations) stations.emplace_back(x, y);
  std::vector<std::vector<int>> vis = visibility;
  if (vis.empty()) {
    // all stations visible at every step
    std::vector<int> all(n_bs);
    for (std::size_t i = 0; i < n_bs; ++i) all[i] = static_cast<int>(i);
    vis.push_back(std::move(all));
  }
  Vector nu0(4);
  nu0 << 50.0, 50.0, 0.0, 0.0;
  Vector p0_diag(4);
  p0_diag << 100.0, 100.0, 1e-3, 1e-3;
  return rss_model(lambdas, rhos, theta(2 * n_bs + 1), theta(2 * n_bs), stations, std::move(vis),
                   cfg.dt, nu0, p0_diag.asDiagonal());
}

struct FilterSpec {
  std::string filter = "bspf";
  ResampleScheme resampling = ResampleScheme::systematic;
  int n = 100;
  int l = 0;
  bool relinearize = true;
};

inline ResampleScheme resample_from_string(const std::string& s) {
  return s == "multinomial" ? ResampleScheme::multinomial : ResampleScheme::systematic;
}

// One marginal-likelihood estimate with the given filter variant.
inline double run_filter(const GaussianSsm& model, const FilterSpec& spec, const Dataset& data,
                         Rng& rng) {
  const bool twisted = spec.filter.rfind("twisted", 0) == 0;
  const bool ekf_prop = spec.filter.find("ekfpf") != std::string::npos;
  const Proposal proposal = ekf_prop ? ekf_proposal(model) : bootstrap_proposal(model);
  if (!twisted)
    return pf_run(model, proposal, spec.resampling, data, spec.n, rng).log_z.back();
  const TwistScheme scheme = spec.filter.find("mode") != std::string::npos ? TwistScheme::mode
                                                                           : TwistScheme::local;
  return tpf_run(model, proposal, scheme, spec.resampling, spec.l, data, spec.n, rng,
                 /*keep_states=*/false, spec.relinearize)
      .loglik();
}

inline Estimator make_estimator(const RunConfig& cfg, const FilterSpec& spec) {
  return [cfg, spec](const Vector& theta, const Dataset& data, Rng& rng) -> double {
    const GaussianSsm model = model_from_theta(cfg, theta, data.visible);
    return run_filter(model, spec, data, rng);
  };
}

// Run tasks 0..count-1 on a small worker pool; each task writes only its own
// slot, so results are deterministic regardless of scheduling.
template <typename Fn>
void parallel_for(int count, Fn&& fn) {
  const unsigned workers = std::min<unsigned>(std::thread::hardware_concurrency(),
                                              static_cast<unsigned>(count));
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

inline std::filesystem::path out_path(const std::string& out_dir, const std::string& name) {
  std::filesystem::create_directories(out_dir);
  return std::filesystem::path(out_dir) / name;
}

// simulate: draw one dataset (with truth) from the configured model.
inline void cmd_simulate(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  Rng rng(seed);
  std::vector<std::vector<int>> visibility;
  if (cfg.model == "rss")
    visibility = sample_visibility(cfg.t, static_cast<int>(cfg.lambda.size()), cfg.vis_prob, rng);
  const GaussianSsm model = model_from_theta(cfg, theta_from_config(cfg), visibility);
  Dataset data = simulate(model, cfg.t, rng);
  data.visible = visibility;
  if (cfg.model == "rss") data.obs_cols = static_cast<int>(cfg.lambda.size());
  write_dataset(out_path(out_dir, "dataset_seed" + std::to_string(seed) + ".csv").string(), data);
}

// varz: variance of the log-likelihood estimate per (filter, n, l) cell,
// averaged over the configured datasets.
inline void cmd_varz(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  if (cfg.data_paths.empty()) throw ConfigError("varz: no datasets configured");
  std::vector<Dataset> datasets;
  for (const auto& p : cfg.data_paths) datasets.push_back(read_dataset(p));
  const Vector theta = theta_from_config(cfg);

  struct Cell {
    std::string filter;
    int n, l;
    double var_log_z = std::numeric_limits<double>::quiet_NaN();
    double mean_runtime_s = std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<Cell> cells;
  for (const auto& filter : cfg.filters)
    for (int n : cfg.n_values)
      for (int l : cfg.l_values) cells.push_back({filter, n, l});

  for (std::size_t c = 0; c < cells.size(); ++c) {
    Cell& cell = cells[c];
    FilterSpec spec{cell.filter, resample_from_string(cfg.resampling), cell.n, cell.l,
                    cfg.relinearize};
    const int tasks = static_cast<int>(datasets.size()) * cfg.replicates;
    std::vector<double> log_z(tasks, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> secs(tasks, 0.0);
    std::atomic<int> failures{0};
    parallel_for(tasks, [&](int task) {
      const int ds = task / cfg.replicates;
      const int rep = task % cfg.replicates;
      Rng rng = substream(seed, c, ds, rep);
      const GaussianSsm model = model_from_theta(cfg, theta, datasets[ds].visible);
      const auto start = std::chrono::steady_clock::now();
      try {
        log_z[task] = run_filter(model, spec, datasets[ds], rng);
      } catch (const std::runtime_error& err) {
        ++failures;
        std::cerr << "varz cell " << cell.filter << " n=" << cell.n << " l=" << cell.l
                  << " failed: " << err.what() << "\n";
      }
      secs[task] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    });
    if (failures.load() == 0) {
      double var_acc = 0.0;
      for (std::size_t ds = 0; ds < datasets.size(); ++ds) {
        std::vector<double> per_ds(log_z.begin() + ds * cfg.replicates,
                                   log_z.begin() + (ds + 1) * cfg.replicates);
        var_acc += var_log_z(per_ds);
      }
      cell.var_log_z = var_acc / static_cast<double>(datasets.size());
      double time_acc = 0.0;
      for (double s : secs) time_acc += s;
      cell.mean_runtime_s = time_acc / tasks;
    }
  }

  std::ofstream out(out_path(out_dir, "varz.csv"));
  out << "filter,resampling,n,l,var_logz,mean_runtime_s\n";
  for (const auto& cell : cells)
    out << cell.filter << ',' << cfg.resampling << ',' << cell.n << ',' << cell.l << ','
        << detail::fmt_double(cell.var_log_z) << ',' << detail::fmt_double(cell.mean_runtime_s)
        << "\n";
}

// pmmh: blockwise PMMH over the configured dataset, with per-parameter
// autocorrelation and effective-sample-size diagnostics.
inline void cmd_pmmh(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  if (cfg.data_paths.empty()) throw ConfigError("pmmh: no dataset configured");
  if (cfg.priors.empty()) throw ConfigError("pmmh: no priors configured");
  const Dataset data = read_dataset(cfg.data_paths[0]);
  const auto names = theta_names(cfg);
  if (cfg.priors.size() != names.size()) throw ConfigError("pmmh: need one prior per parameter");

  MhConfig mh;
  mh.iterations = cfg.pmmh_iterations;
  mh.burn_in = cfg.pmmh_burn_in;
  mh.blocks = cfg.blocks.empty()
                  ? std::vector<std::vector<int>>{[&] {
                      std::vector<int> all(names.size());
                      for (std::size_t i = 0; i < names.size(); ++i) all[i] = static_cast<int>(i);
                      return all;
                    }()}
                  : cfg.blocks;
  if (cfg.proposal_sd.size() != names.size())
    throw ConfigError("pmmh: proposal_sd must list one value per parameter");
  for (const auto& block : mh.blocks) {
    Matrix cov = Matrix::Zero(block.size(), block.size());
    for (std::size_t j = 0; j < block.size(); ++j)
      cov(j, j) = cfg.proposal_sd[block[j]] * cfg.proposal_sd[block[j]];
    mh.proposal_cov.push_back(cov);
  }
  if (!cfg.theta0.empty()) {
    mh.theta0.resize(cfg.theta0.size());
    for (std::size_t i = 0; i < cfg.theta0.size(); ++i) mh.theta0(i) = cfg.theta0[i];
  }

  PriorSpec prior{cfg.priors};
  FilterSpec spec{cfg.filters[0], resample_from_string(cfg.resampling), cfg.n_values[0],
                  cfg.l_values[0], cfg.relinearize};
  Rng rng(seed);
  const Chain chain = pmmh(make_estimator(cfg, spec), prior, mh, data, rng);
  write_chain(out_path(out_dir, "chain.csv").string(), chain);

  const int tau = static_cast<int>(chain.draws.rows()) - mh.burn_in;
  std::vector<std::pair<std::string, double>> metrics;
  metrics.emplace_back("estimator_failures", chain.estimator_failures);
  for (std::size_t b = 0; b < mh.blocks.size(); ++b) {
    double acc = 0.0;
    for (const auto& row : chain.accepted) acc += row[b];
    metrics.emplace_back("acc_rate_b" + std::to_string(b + 1), acc / chain.accepted.size());
  }
  if (tau >= 10) {
    const int max_lag = std::min(tau - 1, 200);
    for (std::size_t p = 0; p < names.size(); ++p) {
      std::vector<double> component(tau);
      for (int i = 0; i < tau; ++i) component[i] = chain.draws(mh.burn_in + i, p);
      write_autocorr(out_path(out_dir, "autocorr_" + names[p] + ".csv").string(),
                     autocorr(component, max_lag));
      metrics.emplace_back("ess_" + names[p], ess(component));
      double mean = 0.0;
      for (double v : component) mean += v;
      metrics.emplace_back("mean_" + names[p], mean / tau);
    }
  }
  write_metrics(out_path(out_dir, "metrics.csv").string(), metrics);
}

// track: EKF with fixed parameters; reports position RMSE and consistency.
inline void cmd_track(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  (void)seed;  // the EKF pass is deterministic
  if (cfg.data_paths.empty()) throw ConfigError("track: no dataset configured");
  const Dataset data = read_dataset(cfg.data_paths[0]);
  if (data.truth.empty()) throw ConfigError("track: dataset has no truth columns");

  Vector theta;
  if (!cfg.track_theta.empty()) {
    theta.resize(cfg.track_theta.size());
    for (std::size_t i = 0; i < cfg.track_theta.size(); ++i) theta(i) = cfg.track_theta[i];
  } else if (!cfg.track_chain.empty()) {
    const Chain chain = read_chain(cfg.track_chain);
    const int tau = static_cast<int>(chain.draws.rows()) - cfg.track_burn_in;
    if (tau < 1) throw ConfigError("track: chain shorter than burn-in");
    theta = chain.draws.bottomRows(tau).colwise().mean().transpose();
  } else {
    throw ConfigError("track: need [track] theta or chain");
  }

  const GaussianSsm model = model_from_theta(cfg, theta, data.visible);
  const FilterTrack track = ekf_track(model, data);
  const TrackMetrics tm = track_metrics(track.means, track.covs, data.truth);
  write_metrics(out_path(out_dir, "track_metrics.csv").string(),
                {{"rmse", tm.rmse}, {"consistency", tm.consistency}});
}

}  // namespace twistpf

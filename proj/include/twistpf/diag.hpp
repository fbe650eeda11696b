#pragma once

#include <cmath>
#include <vector>

#include "twistpf/gauss.hpp"

namespace twistpf {

// 0.95 quantile of chi-squared with 2 dof: -2 log(0.05)
constexpr double kChi2Dof2Q95 = 5.9914645471079817;

// Population variance (1/tau) of the log values, centered at their mean.
inline double var_log_z(const std::vector<double>& log_z) {
  const std::size_t tau = log_z.size();
  if (tau < 2) throw TooFewSamples("var_log_z: need at least two samples");
  double mean = 0.0;
  for (double v : log_z) mean += v;
  mean /= static_cast<double>(tau);
  double acc = 0.0;
  for (double v : log_z) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(tau);
}

// Sample autocorrelation ac(l) for l = 0..max_lag, normalized to ac(0) = 1.
inline std::vector<double> autocorr(const std::vector<double>& chain, int max_lag) {
  const int tau = static_cast<int>(chain.size());
  if (tau <= max_lag || max_lag < 0) throw TooFewSamples("autocorr: chain shorter than max_lag");
  double mean = 0.0;
  for (double v : chain) mean += v;
  mean /= tau;
  auto raw = [&](int lag) {
    double acc = 0.0;
    for (int j = 0; j + lag < tau; ++j) acc += (chain[j] - mean) * (chain[j + lag] - mean);
    return acc / static_cast<double>(tau - 1);
  };
  const double c0 = raw(0);
  if (c0 <= 0.0) throw InvalidParameter("autocorr: zero-variance chain");
  std::vector<double> ac(max_lag + 1);
  ac[0] = 1.0;
  for (int l = 1; l <= max_lag; ++l) ac[l] = raw(l) / c0;
  return ac;
}

// Effective sample size tau / (1 + 2 sum ac(l)), with the sum truncated at
// the first non-positive autocorrelation (initial positive sequence).
// Lags are evaluated lazily up to the truncation point.
inline double ess(const std::vector<double>& chain) {
  const int tau = static_cast<int>(chain.size());
  if (tau < 2) throw TooFewSamples("ess: need at least two samples");
  double mean = 0.0;
  for (double v : chain) mean += v;
  mean /= tau;
  auto raw = [&](int lag) {
    double acc = 0.0;
    for (int j = 0; j + lag < tau; ++j) acc += (chain[j] - mean) * (chain[j + lag] - mean);
    return acc / static_cast<double>(tau - 1);
  };
  const double c0 = raw(0);
  if (c0 <= 0.0) throw InvalidParameter("ess: zero-variance chain");
  double s = 0.0;
  for (int l = 1; l < tau; ++l) {
    const double ac = raw(l) / c0;
    if (ac <= 0.0) break;
    s += ac;
  }
  return static_cast<double>(tau) / (1.0 + 2.0 * s);
}

struct TrackMetrics {
  double rmse = 0.0;
  double consistency = 0.0;  // fraction of steps inside the 95% ellipsoid
};

// Position RMSE and 95%-ellipsoid consistency over the first two state
// components.
inline TrackMetrics track_metrics(const std::vector<Vector>& means,
                                  const std::vector<Matrix>& covs,
                                  const std::vector<Vector>& truth) {
  if (means.size() != covs.size() || means.size() != truth.size() || means.empty())
    throw ShapeMismatch("track_metrics: input lengths disagree");
  double se = 0.0;
  int inside = 0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    const Vector err = (means[k].head(2) - truth[k].head(2)).eval();
    se += err.squaredNorm();
    const Matrix pos_cov = covs[k].topLeftCorner(2, 2);
    const CholPsd f = chol_psd(pos_cov);
    const double d2 = err.dot(f.solve(err));
    if (d2 <= kChi2Dof2Q95) ++inside;
  }
  TrackMetrics out;
  out.rmse = std::sqrt(se / static_cast<double>(means.size()));
  out.consistency = static_cast<double>(inside) / static_cast<double>(means.size());
  return out;
}

struct MetricReport {
  double var_log_z = 0.0;
  std::vector<double> ac;
  double ess = 0.0;
  double rmse = 0.0;
  double consistency = 0.0;
};

}  // namespace twistpf

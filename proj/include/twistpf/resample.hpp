#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "twistpf/gauss.hpp"

namespace twistpf {

// Unnormalized log-weights. Normalization happens in cumulative(); at least
// one entry must be finite.
struct WeightVector {
  std::vector<double> log_w;

  std::size_t size() const { return log_w.size(); }
};

using AncestorVector = std::vector<int>;  // 0-based particle indices

// Normalized cumulative weights d_0 = 0 < d_1 <= ... <= d_n = 1; the last
// entry is forced to 1 exactly. Returned vector has n+1 entries.
inline std::vector<double> cumulative(const WeightVector& w) {
  const std::size_t n = w.size();
  if (n == 0) throw DegenerateWeights("cumulative: no weights");
  double m = kNegInf;
  for (double lw : w.log_w) m = std::max(m, lw);
  if (m == kNegInf) throw DegenerateWeights("cumulative: all weights zero");
  std::vector<double> d(n + 1, 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::exp(w.log_w[i] - m);
    d[i + 1] = acc;
  }
  for (std::size_t i = 1; i <= n; ++i) d[i] /= acc;
  d[n] = 1.0;
  return d;
}

namespace detail {
// Index j (0-based) with u in (d_j, d_{j+1}]; u == 0 maps to the first
// interval of positive length so the map is total.
inline int interval_lookup(const std::vector<double>& d, double u) {
  const std::size_t n = d.size() - 1;
  if (u <= 0.0) {
    for (std::size_t j = 0; j < n; ++j)
      if (d[j + 1] > 0.0) return static_cast<int>(j);
    throw DegenerateWeights("interval_lookup: no positive-weight interval");
  }
  const auto it = std::lower_bound(d.begin() + 1, d.end(), u);
  return static_cast<int>(it - d.begin()) - 1;
}
}  // namespace detail

// Multinomial map: r^i(u, w) = j iff u^i in (d_j, d_{j+1}].
inline AncestorVector multinomial_map(const std::vector<double>& u, const WeightVector& w) {
  if (u.size() != w.size()) throw ShapeMismatch("multinomial_map: |u| != n");
  const std::vector<double> d = cumulative(w);
  AncestorVector a(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) a[i] = detail::interval_lookup(d, u[i]);
  return a;
}

// Systematic map: r^i(u, w) = j iff u + i - 1 in (n d_j, n d_{j+1}].
inline AncestorVector systematic_map(double u, const WeightVector& w) {
  const std::vector<double> d = cumulative(w);
  const std::size_t n = w.size();
  AncestorVector a(n);
  for (std::size_t i = 0; i < n; ++i)
    a[i] = detail::interval_lookup(d, (u + static_cast<double>(i)) / static_cast<double>(n));
  return a;
}

}  // namespace twistpf

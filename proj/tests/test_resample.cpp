#include <catch2/catch.hpp>

#include "oracles.hpp"
#include "twistpf/resample.hpp"
#include "twistpf/rng.hpp"

using namespace twistpf;

namespace {

WeightVector weights_from_linear(std::initializer_list<double> w) {
  WeightVector out;
  for (double v : w) out.log_w.push_back(std::log(v));
  return out;
}

// Exact E[(1/n) sum_i phi(r^i(U))] for the multinomial map: each u^i is an
// independent uniform and the map is piecewise constant on the weight
// intervals, so evaluating at interval midpoints weighted by interval
// lengths integrates it exactly.
double multinomial_expectation(const WeightVector& w, const std::vector<double>& phi) {
  const auto d = cumulative(w);
  const std::size_t n = w.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double e_i = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double len = d[j + 1] - d[j];
      if (len <= 0.0) continue;
      std::vector<double> u(n, 0.5);
      u[i] = 0.5 * (d[j] + d[j + 1]);
      e_i += len * phi[multinomial_map(u, w)[i]];
    }
    total += e_i;
  }
  return total / static_cast<double>(n);
}

// Exact E[(1/n) sum_i phi(r^i(U))] for the systematic map by piecewise
// integration over the single uniform: breakpoints are where any component
// of the map changes.
double systematic_expectation(const WeightVector& w, const std::vector<double>& phi) {
  const auto d = cumulative(w);
  const std::size_t n = w.size();
  std::vector<double> cuts{0.0, 1.0};
  for (std::size_t j = 0; j <= n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const double cut = static_cast<double>(n) * d[j] - static_cast<double>(i);
      if (cut > 0.0 && cut < 1.0) cuts.push_back(cut);
    }
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double len = cuts[c + 1] - cuts[c];
    if (len <= 1e-15) continue;
    const auto a = systematic_map(0.5 * (cuts[c] + cuts[c + 1]), w);
    double mean_phi = 0.0;
    for (int idx : a) mean_phi += phi[idx];
    total += len * mean_phi / static_cast<double>(n);
  }
  return total;
}

}  // namespace

TEST_CASE("cumulative weights", "[resample]") {
  const auto d = cumulative(weights_from_linear({1.0, 1.0, 1.0, 1.0}));
  REQUIRE(d[0] == 0.0);
  REQUIRE(d[1] == Approx(0.25));
  REQUIRE(d[2] == Approx(0.5));
  REQUIRE(d[3] == Approx(0.75));
  REQUIRE(d[4] == 1.0);

  // one-hot weight gives a step function
  WeightVector onehot;
  onehot.log_w = {kNegInf, 0.0, kNegInf};
  const auto ds = cumulative(onehot);
  REQUIRE(ds[1] == 0.0);
  REQUIRE(ds[2] == 1.0);
  REQUIRE(ds[3] == 1.0);

  REQUIRE_THROWS_AS(cumulative(WeightVector{{kNegInf, kNegInf}}), DegenerateWeights);
}

TEST_CASE("cumulative handles a 600-nat spread", "[resample]") {
  Rng rng(13);
  WeightVector w;
  for (int i = 0; i < 32; ++i) w.log_w.push_back(600.0 * (rng.uniform() - 0.5));
  const auto d = cumulative(w);
  REQUIRE(d.front() == 0.0);
  REQUIRE(d.back() == 1.0);
  for (std::size_t j = 1; j < d.size(); ++j) {
    REQUIRE(std::isfinite(d[j]));
    REQUIRE(d[j] >= d[j - 1]);
  }
}

TEST_CASE("multinomial map basics", "[resample]") {
  // n = 1: every u maps to the only particle
  REQUIRE(multinomial_map({0.3}, weights_from_linear({1.0}))[0] == 0);
  REQUIRE(multinomial_map({0.0}, weights_from_linear({1.0}))[0] == 0);

  const auto a = multinomial_map({0.25, 0.75}, weights_from_linear({0.5, 0.5}));
  REQUIRE(a[0] == 0);
  REQUIRE(a[1] == 1);

  // u = 0 maps to the first positive-weight index
  WeightVector zero_first;
  zero_first.log_w = {kNegInf, 0.0};
  REQUIRE(multinomial_map({0.0, 0.0}, zero_first)[0] == 1);
}

TEST_CASE("multinomial marginal law equals the normalized weights", "[resample]") {
  Rng rng(99);
  WeightVector w;
  for (int i = 0; i < 3; ++i) w.log_w.push_back(rng.normal());
  const auto d = cumulative(w);
  // exact law by interval-length enumeration
  for (int j = 0; j < 3; ++j) {
    std::vector<double> phi(3, 0.0);
    phi[j] = 1.0;
    REQUIRE(multinomial_expectation(w, phi) == Approx(d[j + 1] - d[j]).margin(1e-14));
  }
}

TEST_CASE("systematic map basics", "[resample]") {
  // equal weights: stratified identity for any u
  for (double u : {0.1, 0.5, 0.9}) {
    const auto a = systematic_map(u, weights_from_linear({1, 1, 1, 1}));
    for (int i = 0; i < 4; ++i) REQUIRE(a[i] == i);
  }
  // hand interval arithmetic: n d = (1.5, 2.0)
  const WeightVector w = weights_from_linear({0.75, 0.25});
  const auto a1 = systematic_map(0.4, w);
  REQUIRE(a1[0] == 0);
  REQUIRE(a1[1] == 0);
  const auto a2 = systematic_map(0.6, w);
  REQUIRE(a2[0] == 0);
  REQUIRE(a2[1] == 1);
}

TEST_CASE("systematic expected counts by exact piecewise integration", "[resample]") {
  Rng rng(55);
  for (int trial = 0; trial < 5; ++trial) {
    WeightVector w;
    const int n = 2 + static_cast<int>(rng.uniform_index(3));
    for (int i = 0; i < n; ++i) w.log_w.push_back(2.0 * rng.normal());
    const auto d = cumulative(w);
    for (int j = 0; j < n; ++j) {
      std::vector<double> phi(n, 0.0);
      phi[j] = 1.0;
      // E[count_j] / n = normalized weight
      REQUIRE(systematic_expectation(w, phi) == Approx(d[j + 1] - d[j]).margin(1e-14));
    }
  }
}

TEST_CASE("resampling maps satisfy the weighted-average identity", "[resample]") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(3));  // n <= 4
    WeightVector w;
    for (int i = 0; i < n; ++i) w.log_w.push_back(3.0 * rng.normal());
    const auto d = cumulative(w);
    std::vector<double> phi(n);
    for (int i = 0; i < n; ++i) phi[i] = rng.normal();
    double weighted = 0.0;
    for (int j = 0; j < n; ++j) weighted += (d[j + 1] - d[j]) * phi[j];
    REQUIRE(multinomial_expectation(w, phi) == Approx(weighted).margin(1e-12));
    REQUIRE(systematic_expectation(w, phi) == Approx(weighted).margin(1e-12));
  }
}

TEST_CASE("maps are monotone in u", "[resample]") {
  Rng rng(7);
  WeightVector w;
  for (int i = 0; i < 5; ++i) w.log_w.push_back(rng.normal());
  int prev = 0;
  for (double u = 0.0; u <= 1.0; u += 0.001) {
    const int j = multinomial_map(std::vector<double>(5, std::max(u, 1e-12)), w)[2];
    REQUIRE(j >= prev);
    prev = j;
  }
}

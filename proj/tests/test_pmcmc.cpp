#include <catch2/catch.hpp>

#include "oracles.hpp"
#include "twistpf/kalman.hpp"
#include "twistpf/pmcmc.hpp"

using namespace twistpf;

namespace {

GaussianSsm lg1(double a, double q, double h, double r, double nu0, double p0) {
  Matrix am(1, 1), qm(1, 1), hm(1, 1), rm(1, 1), pm(1, 1);
  am << a;
  qm << q;
  hm << h;
  rm << r;
  pm << p0;
  Vector nu(1);
  nu << nu0;
  return linear_gaussian_model(am, qm, hm, rm, nu, pm);
}

}  // namespace

TEST_CASE("prior densities", "[pmcmc]") {
  PriorSpec spec;
  spec.terms = {{PriorFamily::inverse_gamma, 0.1, 0.1}};
  // the density vanishes toward the support boundary and is -inf outside
  REQUIRE(prior_logpdf(spec, (Vector(1) << 1e-300).finished()) < -1e250);
  REQUIRE(std::exp(prior_logpdf(spec, (Vector(1) << 1e-300).finished())) == 0.0);
  REQUIRE(prior_logpdf(spec, Vector::Zero(1)) == kNegInf);
  REQUIRE(prior_logpdf(spec, (Vector(1) << -1.0).finished()) == kNegInf);

  PriorSpec normal70;
  normal70.terms = {{PriorFamily::normal, 0.0, 70.0 * 70.0}};
  REQUIRE(prior_logpdf(normal70, Vector::Zero(1)) ==
          Approx(-0.5 * std::log(2.0 * M_PI * 4900.0)).margin(1e-12));

  // gamma(3.8, 1.6) normalizes to one
  PriorSpec g;
  g.terms = {{PriorFamily::gamma, 3.8, 1.6}};
  const double integral = oracles::simpson(
      [&](double x) {
        return x <= 0.0 ? 0.0 : std::exp(prior_term_logpdf(g.terms[0], x));
      },
      1e-9, 120.0, 400000);
  REQUIRE(integral == Approx(1.0).margin(1e-8));
}

TEST_CASE("prior sampling moments", "[pmcmc]") {
  Rng rng(101);
  PriorSpec spec;
  spec.terms = {{PriorFamily::normal, 0.0, 1.0}};
  Rng a(5), b(5);
  REQUIRE(sample_prior(spec, a)(0) == sample_prior(spec, b)(0));

  // inverse-gamma(3, b): mean b / (a - 1)
  PriorSpec ig;
  ig.terms = {{PriorFamily::inverse_gamma, 3.0, 2.0}};
  const int reps = 100000;
  double acc = 0.0;
  for (int i = 0; i < reps; ++i) acc += sample_prior(ig, rng)(0);
  acc /= reps;
  const double ig_mean = 2.0 / 2.0, ig_sd = std::sqrt(1.0);  // var b^2/((a-1)^2 (a-2))
  REQUIRE(std::abs(acc - ig_mean) < 4.0 * ig_sd / std::sqrt(static_cast<double>(reps)));

  // gamma(3.8, 1.6): mean a b = 6.08
  PriorSpec gm;
  gm.terms = {{PriorFamily::gamma, 3.8, 1.6}};
  acc = 0.0;
  for (int i = 0; i < reps; ++i) acc += sample_prior(gm, rng)(0);
  acc /= reps;
  const double g_sd = std::sqrt(3.8) * 1.6;
  REQUIRE(std::abs(acc - 6.08) < 4.0 * g_sd / std::sqrt(static_cast<double>(reps)));
}

TEST_CASE("pmmh with the exact estimator matches grid quadrature", "[pmcmc]") {
  const double true_q = 0.3;
  Rng sim(7);
  const Dataset data = simulate(lg1(0.9, true_q, 1.0, 0.5, 0.0, 1.0), 30, sim);

  PriorSpec prior;
  prior.terms = {{PriorFamily::inverse_gamma, 2.0, 0.5}};
  const Estimator exact = [&](const Vector& theta, const Dataset& d, Rng&) {
    return kf_loglik(lg1(0.9, theta(0), 1.0, 0.5, 0.0, 1.0), d);
  };

  // 400-node grid posterior mean as the reference
  const int nodes = 400;
  const double lo = 1e-3, hi = 3.0;
  double num = 0.0, den = 0.0;
  Rng unused(0);
  for (int i = 0; i < nodes; ++i) {
    const double q = lo + (hi - lo) * (i + 0.5) / nodes;
    const double w = std::exp(exact((Vector(1) << q).finished(), data, unused) +
                              prior_logpdf(prior, (Vector(1) << q).finished()));
    num += q * w;
    den += w;
  }
  const double grid_mean = num / den;

  MhConfig cfg;
  cfg.iterations = 50000;
  cfg.burn_in = 2000;
  cfg.blocks = {{0}};
  cfg.proposal_cov = {(Matrix(1, 1) << 0.08 * 0.08).finished()};
  Rng rng(8);
  const Chain chain = pmmh(exact, prior, cfg, data, rng);
  double mean = 0.0;
  for (int i = cfg.burn_in; i < cfg.iterations; ++i) mean += chain.draws(i, 0);
  mean /= cfg.iterations - cfg.burn_in;
  REQUIRE(std::abs(mean - grid_mean) / grid_mean < 0.02);
}

TEST_CASE("degenerate proposal accepts almost surely", "[pmcmc]") {
  Rng sim(9);
  const Dataset data = simulate(lg1(0.9, 0.3, 1.0, 0.5, 0.0, 1.0), 10, sim);
  PriorSpec prior;
  prior.terms = {{PriorFamily::inverse_gamma, 2.0, 0.5}};
  const Estimator exact = [&](const Vector& theta, const Dataset& d, Rng&) {
    return kf_loglik(lg1(0.9, theta(0), 1.0, 0.5, 0.0, 1.0), d);
  };
  MhConfig cfg;
  cfg.iterations = 500;
  cfg.blocks = {{0}};
  cfg.proposal_cov = {(Matrix(1, 1) << 1e-20).finished()};
  cfg.theta0 = (Vector(1) << 0.4).finished();
  Rng rng(10);
  const Chain chain = pmmh(exact, prior, cfg, data, rng);
  double acc = 0.0;
  for (const auto& row : chain.accepted) acc += row[0];
  REQUIRE(acc / chain.accepted.size() > 0.99);
  REQUIRE(std::abs(chain.draws(499, 0) - 0.4) < 1e-6);
}

TEST_CASE("rejected moves repeat the previous row exactly", "[pmcmc]") {
  Rng sim(11);
  const Dataset data = simulate(lg1(0.9, 0.3, 1.0, 0.5, 0.0, 1.0), 15, sim);
  PriorSpec prior;
  prior.terms = {{PriorFamily::inverse_gamma, 2.0, 0.5}};
  const Estimator exact = [&](const Vector& theta, const Dataset& d, Rng&) {
    return kf_loglik(lg1(0.9, theta(0), 1.0, 0.5, 0.0, 1.0), d);
  };
  MhConfig cfg;
  cfg.iterations = 2000;
  cfg.blocks = {{0}};
  cfg.proposal_cov = {(Matrix(1, 1) << 0.25).finished()};  // coarse: frequent rejections
  Rng rng(12);
  const Chain chain = pmmh(exact, prior, cfg, data, rng);
  int rejections = 0;
  for (int i = 1; i < cfg.iterations; ++i) {
    if (!chain.accepted[i][0]) {
      ++rejections;
      REQUIRE(chain.draws(i, 0) == chain.draws(i - 1, 0));
      REQUIRE(chain.log_z[i] == chain.log_z[i - 1]);
    }
  }
  REQUIRE(rejections > 0);
}

TEST_CASE("estimator failures count as rejections", "[pmcmc]") {
  Rng sim(13);
  const Dataset data = simulate(lg1(0.9, 0.3, 1.0, 0.5, 0.0, 1.0), 10, sim);
  PriorSpec prior;
  prior.terms = {{PriorFamily::inverse_gamma, 2.0, 0.5}};
  const Estimator flaky = [&](const Vector& theta, const Dataset& d, Rng&) -> double {
    if (theta(0) > 0.5) throw EstimatorFailure("synthetic failure region");
    return kf_loglik(lg1(0.9, theta(0), 1.0, 0.5, 0.0, 1.0), d);
  };
  MhConfig cfg;
  cfg.iterations = 1000;
  cfg.blocks = {{0}};
  cfg.proposal_cov = {(Matrix(1, 1) << 0.04).finished()};
  cfg.theta0 = (Vector(1) << 0.3).finished();
  Rng rng(14);
  const Chain chain = pmmh(flaky, prior, cfg, data, rng);
  REQUIRE(chain.estimator_failures > 0);
  for (int i = 0; i < cfg.iterations; ++i) REQUIRE(chain.draws(i, 0) <= 0.5);
}

TEST_CASE("block ordering does not change the posterior", "[pmcmc]") {
  // two variance parameters (process and measurement noise)
  Rng sim(15);
  const Dataset data = simulate(lg1(0.9, 0.3, 1.0, 0.4, 0.0, 1.0), 40, sim);
  PriorSpec prior;
  prior.terms = {{PriorFamily::inverse_gamma, 2.0, 0.5}, {PriorFamily::inverse_gamma, 2.0, 0.5}};
  const Estimator exact = [&](const Vector& theta, const Dataset& d, Rng&) {
    return kf_loglik(lg1(0.9, theta(0), 1.0, theta(1), 0.0, 1.0), d);
  };
  auto run_with_blocks = [&](std::vector<std::vector<int>> blocks, std::uint64_t seed) {
    MhConfig cfg;
    cfg.iterations = 30000;
    cfg.burn_in = 2000;
    cfg.blocks = std::move(blocks);
    for (std::size_t b = 0; b < cfg.blocks.size(); ++b)
      cfg.proposal_cov.push_back((Matrix(1, 1) << 0.06 * 0.06).finished());
    cfg.theta0 = (Vector(2) << 0.3, 0.4).finished();
    Rng rng(seed);
    const Chain chain = pmmh(exact, prior, cfg, data, rng);
    Vector mean = Vector::Zero(2);
    for (int i = cfg.burn_in; i < cfg.iterations; ++i) mean += chain.draws.row(i).transpose();
    return (mean / (cfg.iterations - cfg.burn_in)).eval();
  };
  const Vector m1 = run_with_blocks({{0}, {1}}, 21);
  const Vector m2 = run_with_blocks({{1}, {0}}, 22);
  // weak agreement within Monte Carlo bands
  REQUIRE(std::abs(m1(0) - m2(0)) < 0.05 * std::max(m1(0), m2(0)) + 0.02);
  REQUIRE(std::abs(m1(1) - m2(1)) < 0.05 * std::max(m1(1), m2(1)) + 0.02);
}

TEST_CASE("block validation and pilot covariance helper", "[pmcmc]") {
  PriorSpec prior;
  prior.terms = {{PriorFamily::normal, 0.0, 1.0}, {PriorFamily::normal, 0.0, 1.0}};
  const Estimator stub = [](const Vector&, const Dataset&, Rng&) { return 0.0; };
  Dataset data;
  MhConfig bad;
  bad.iterations = 1;
  bad.blocks = {{0}};  // does not cover parameter 1
  bad.proposal_cov = {(Matrix(1, 1) << 1.0).finished()};
  Rng rng(1);
  REQUIRE_THROWS_AS(pmmh(stub, prior, bad, data, rng), InvalidParameter);

  Matrix draws(4, 2);
  draws << 1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0;
  const auto covs = pilot_proposal_cov(draws, {{0, 1}});
  // empirical covariance of the two columns, scaled by 2.38^2 / 2
  Matrix expect(2, 2);
  expect << 5.0 / 3.0, 10.0 / 3.0, 10.0 / 3.0, 20.0 / 3.0;
  expect *= 2.38 * 2.38 / 2.0;
  REQUIRE((covs[0] - expect).cwiseAbs().maxCoeff() < 1e-9);
}

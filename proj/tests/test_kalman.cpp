#include <catch2/catch.hpp>

#include "oracles.hpp"
#include "twistpf/kalman.hpp"

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

TEST_CASE("ekf_predict on a linear model has zero drift offset", "[kalman]") {
  Matrix a(2, 2);
  a << 1.0, 0.5, 0.0, 1.0;
  const GaussianSsm model = linear_gaussian_model(a, 0.1 * Matrix::Identity(2, 2),
                                                  Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                                                  Vector::Zero(2), Matrix::Identity(2, 2));
  FilterState st{(Vector(2) << 1.0, 2.0).finished(), 0.3 * Matrix::Identity(2, 2), 0.0};
  const PredictResult pr = ekf_predict(st, model, 0);
  REQUIRE((pr.state.mean - a * st.mean).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE(pr.drift_off.cwiseAbs().maxCoeff() < 1e-14);

  // point mass propagates to exactly Q
  FilterState point{st.mean, Matrix::Zero(2, 2), 0.0};
  const PredictResult pp = ekf_predict(point, model, 0);
  REQUIRE((pp.state.cov - 0.1 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ekf one step on range-bearing matches direct recomputation", "[kalman]") {
  const GaussianSsm model = range_bearing_model(0.1, 1.0, 0.01);
  FilterState st{model.init.mean, model.init.cov, 0.0};
  const PredictResult pr = ekf_predict(st, model, 0);

  // direct dense arithmetic, no shared code path
  const Matrix a = model.drift_jac(0, st.mean);
  const Matrix expect_cov = a * st.cov * a.transpose() + model.drift_cov(0);
  REQUIRE((pr.state.mean - a * st.mean).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE((pr.state.cov - expect_cov).cwiseAbs().maxCoeff() < 1e-10);

  Vector y(2);
  y << 145.0, 0.8;
  const UpdateResult up = ekf_update(pr.state, model, 1, y);
  const Matrix h = model.obs_jac(1, pr.state.mean);
  const Matrix s = h * pr.state.cov * h.transpose() + model.obs_cov(1);
  const Matrix gain = pr.state.cov * h.transpose() * oracles::dense_inverse(s);
  Vector innov = y - model.obs(1, pr.state.mean);
  innov(1) = wrap_angle(innov(1));
  REQUIRE((up.state.mean - (pr.state.mean + gain * innov)).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE((up.state.cov - (pr.state.cov - gain * s * gain.transpose())).cwiseAbs().maxCoeff() <
          1e-8);
}

TEST_CASE("ekf_update with an uninformative measurement leaves the state", "[kalman]") {
  const GaussianSsm model = lg1(1.0, 0.5, 1.0, 1e12, 0.0, 1.0);
  FilterState st{(Vector(1) << 2.0).finished(), (Matrix(1, 1) << 1.0).finished(), 0.0};
  const UpdateResult up = ekf_update(st, model, 0, (Vector(1) << 123.0).finished());
  REQUIRE(std::abs(up.state.mean(0) - 2.0) / 2.0 < 1e-6);
}

TEST_CASE("scalar Kalman gain closed form", "[kalman]") {
  const double p = 0.7, hh = 1.3, r = 0.4;
  const GaussianSsm model = lg1(1.0, 0.5, hh, r, 0.0, p);
  FilterState st{Vector::Zero(1), (Matrix(1, 1) << p).finished(), 0.0};
  const UpdateResult up = ekf_update(st, model, 0, (Vector(1) << 1.0).finished());
  REQUIRE(up.lin.gain(0, 0) == Approx(p * hh / (hh * hh * p + r)).epsilon(1e-12));
}

TEST_CASE("posterior covariance agrees with the Joseph form", "[kalman]") {
  const GaussianSsm model = range_bearing_model(0.2, 2.0, 0.02);
  FilterState st{model.init.mean, model.init.cov, 0.0};
  Vector y(2);
  y << 140.0, 0.78;
  const UpdateResult up = ekf_update(st, model, 0, y);
  const Matrix joseph =
      oracles::joseph_update(st.cov, up.lin.gain, up.lin.obs_mat, model.obs_cov(0));
  REQUIRE((up.state.cov - joseph).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("bearing innovation is wrapped across the cut", "[kalman]") {
  const GaussianSsm model = range_bearing_model(0.1, 1.0, 0.01);
  // state in the third quadrant: predicted bearing near -pi
  FilterState st{(Vector(4) << -100.0, -1.0, 0.0, 0.0).finished(),
                 0.01 * Matrix::Identity(4, 4), 0.0};
  const double pred_bearing = std::atan2(-1.0, -100.0);  // about -pi
  Vector y(2);
  y << 100.0, pred_bearing + 0.02 - 2.0 * M_PI;  // same angle, other branch
  const UpdateResult up = ekf_update(st, model, 0, y);
  REQUIRE(std::abs(up.lin.innov(1) - 0.02) < 1e-9);
}

TEST_CASE("relinearize offsets", "[kalman]") {
  const GaussianSsm lin = lg1(1.0, 1.0, 2.0, 1.0, 0.0, 1.0);
  FilterState st{(Vector(1) << 3.0).finished(), (Matrix(1, 1) << 1.0).finished(), 0.0};
  auto [h, off] = relinearize(st, lin, 0);
  REQUIRE(h(0, 0) == 2.0);
  REQUIRE(std::abs(off(0)) < 1e-14);

  const GaussianSsm rb = range_bearing_model(0.1, 1.0, 0.01);
  FilterState strb{(Vector(4) << 3.0, 4.0, 0.0, 0.0).finished(), Matrix::Identity(4, 4), 0.0};
  auto [hrb, offrb] = relinearize(strb, rb, 0);
  REQUIRE((offrb - (rb.obs(0, strb.mean) - hrb * strb.mean)).cwiseAbs().maxCoeff() < 1e-14);
  auto [hrb2, offrb2] = relinearize(strb, rb, 0);
  REQUIRE((hrb - hrb2).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((offrb - offrb2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kf_loglik single-step closed form", "[kalman]") {
  const double h = 1.4, r = 0.6, nu0 = 0.5, p0 = 2.0;
  const GaussianSsm model = lg1(0.9, 0.3, h, r, nu0, p0);
  Dataset data;
  data.obs.push_back((Vector(1) << 1.1).finished());
  data.obs_cols = 1;
  const double expected = mvn_logpdf((Vector(1) << 1.1).finished(),
                                     Gaussian((Vector(1) << h * nu0).finished(),
                                              (Matrix(1, 1) << h * h * p0 + r).finished()));
  REQUIRE(kf_loglik(model, data) == Approx(expected).margin(1e-12));
}

TEST_CASE("kf_loglik matches the joint-Gaussian assembly oracle", "[kalman]") {
  Rng rng(8);
  for (int dx = 1; dx <= 3; ++dx) {
    Matrix a(dx, dx), raw(dx, dx);
    for (int i = 0; i < dx; ++i)
      for (int j = 0; j < dx; ++j) {
        a(i, j) = (i == j ? 0.8 : 0.1 * rng.normal());
        raw(i, j) = rng.normal();
      }
    const Matrix q = 0.2 * Matrix::Identity(dx, dx) + 0.05 * (raw * raw.transpose());
    Matrix h(1, dx);
    for (int j = 0; j < dx; ++j) h(0, j) = rng.normal();
    const Matrix r = (Matrix(1, 1) << 0.5).finished();
    Vector nu0(dx);
    for (int j = 0; j < dx; ++j) nu0(j) = rng.normal();
    const Matrix p0 = Matrix::Identity(dx, dx);
    const GaussianSsm model = linear_gaussian_model(a, q, h, r, nu0, p0);
    Rng sim_rng(100 + dx);
    const Dataset data = simulate(model, 5, sim_rng);
    const oracles::AffineLgOracle oracle(a, q, h, r, nu0, p0);
    REQUIRE(kf_loglik(model, data) == Approx(oracle.loglik(data.obs)).margin(1e-8));
  }
}

TEST_CASE("kf_loglik rejects nonlinear models and is reproducible", "[kalman]") {
  const GaussianSsm rb = range_bearing_model(0.1, 1.0, 0.01);
  Rng rng(3);
  const Dataset data = simulate(rb, 3, rng);
  REQUIRE_THROWS_AS(kf_loglik(rb, data), NonLinearModel);

  const GaussianSsm lin = lg1(0.9, 0.3, 1.0, 0.5, 0.0, 1.0);
  Rng rng2(4);
  const Dataset d2 = simulate(lin, 6, rng2);
  const double l1 = kf_loglik(lin, d2);
  const double l2 = kf_loglik(lin, d2);
  REQUIRE(l1 == l2);
}

TEST_CASE("rts_smoothed_mean reduces to the update at l = 0", "[kalman]") {
  const GaussianSsm model = lg1(0.9, 0.3, 1.0, 0.5, 0.0, 1.0);
  const Gaussian prior((Vector(1) << 0.2).finished(), (Matrix(1, 1) << 1.5).finished());
  const Vector y = (Vector(1) << 0.9).finished();
  const Vector sm = rts_smoothed_mean(model, prior, 0, {y});
  FilterState st{prior.mean, prior.cov, 0.0};
  const UpdateResult up = ekf_update(st, model, 0, y);
  REQUIRE(sm(0) == Approx(up.state.mean(0)).margin(1e-12));
}

TEST_CASE("rts_smoothed_mean matches joint-Gaussian conditioning on linear models", "[kalman]") {
  Matrix a(2, 2);
  a << 0.9, 0.2, 0.0, 0.95;
  const Matrix q = 0.3 * Matrix::Identity(2, 2);
  Matrix h(1, 2);
  h << 1.0, 0.0;
  const Matrix r = (Matrix(1, 1) << 0.4).finished();
  const Vector nu0 = Vector::Zero(2);
  const Matrix p0 = Matrix::Identity(2, 2);
  const GaussianSsm model = linear_gaussian_model(a, q, h, r, nu0, p0);
  const oracles::AffineLgOracle oracle(a, q, h, r, nu0, p0);

  Rng rng(12);
  const Dataset data = simulate(model, 6, rng);
  const Gaussian prior((Vector(2) << 0.5, -0.2).finished(), 2.0 * Matrix::Identity(2, 2));
  const std::vector<Vector> window(data.obs.begin(), data.obs.end());
  const Vector sm = rts_smoothed_mean(model, prior, 0, window);
  const Vector expect = oracle.smoothed_mean(prior.mean, prior.cov, window);
  REQUIRE((sm - expect).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("smoothed mean approaches the data as the prior widens", "[kalman]") {
  const GaussianSsm model = lg1(1.0, 1e-8, 1.0, 0.1, 0.0, 1.0);
  const Vector y = (Vector(1) << 4.0).finished();
  double prev_gap = 1e9;
  for (double p0 : {1.0, 10.0, 100.0, 1000.0}) {
    const Gaussian prior(Vector::Zero(1), (Matrix(1, 1) << p0).finished());
    const Vector sm = rts_smoothed_mean(model, prior, 0, {y, y, y});
    const double gap = std::abs(sm(0) - 4.0);
    REQUIRE(gap < prev_gap + 1e-12);
    prev_gap = gap;
  }
  REQUIRE(prev_gap < 1e-3);
}

TEST_CASE("filtered means reproduce the exact Kalman recursion", "[kalman]") {
  Rng rng(77);
  for (int dx = 1; dx <= 3; ++dx) {
    Matrix a(dx, dx), raw(dx, dx);
    for (int i = 0; i < dx; ++i)
      for (int j = 0; j < dx; ++j) {
        a(i, j) = (i == j ? 0.85 : 0.1 * rng.normal());
        raw(i, j) = rng.normal();
      }
    const Matrix q = 0.3 * Matrix::Identity(dx, dx) + 0.05 * (raw * raw.transpose());
    Matrix h(1, dx);
    for (int j = 0; j < dx; ++j) h(0, j) = rng.normal();
    const Matrix r = (Matrix(1, 1) << 0.4).finished();
    Vector nu0(dx);
    for (int j = 0; j < dx; ++j) nu0(j) = rng.normal();
    const Matrix p0 = Matrix::Identity(dx, dx);
    const GaussianSsm model = linear_gaussian_model(a, q, h, r, nu0, p0);
    Rng sim_rng(300 + dx);
    const Dataset data = simulate(model, 5, sim_rng);
    const oracles::AffineLgOracle oracle(a, q, h, r, nu0, p0);

    FilterState state{model.init.mean, model.init.cov, 0.0};
    for (int k = 0; k <= 5; ++k) {
      if (k > 0) state = ekf_predict(state, model, k - 1).state;
      state = ekf_update(state, model, k, data.obs[k]).state;
      const std::vector<Vector> seen(data.obs.begin(), data.obs.begin() + k + 1);
      const Vector expect = oracle.filtered_mean(k, seen);
      REQUIRE((state.mean - expect).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

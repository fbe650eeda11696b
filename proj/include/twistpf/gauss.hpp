#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "twistpf/errors.hpp"
#include "twistpf/rng.hpp"

namespace twistpf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Gaussian {
  Vector mean;
  Matrix cov;

  Gaussian() = default;
  Gaussian(Vector m, const Matrix& c) : mean(std::move(m)), cov(0.5 * (c + c.transpose())) {
    if (cov.rows() != mean.size() || cov.cols() != mean.size())
      throw ShapeMismatch("Gaussian: mean/cov dimensions disagree");
  }

  Eigen::Index dim() const { return mean.size(); }
};

// Lower-triangular Cholesky factor of a PSD matrix, with escalating
// diagonal jitter. The jitter actually applied is reported so callers can
// log or assert on it.
struct CholPsd {
  Matrix lower;
  double jitter = 0.0;  // epsilon added to the diagonal

  double log_det() const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < lower.rows(); ++i) s += std::log(lower(i, i));
    return 2.0 * s;
  }

  // solve L y = b
  template <typename Derived>
  typename Derived::PlainObject forward_solve(const Eigen::MatrixBase<Derived>& b) const {
    return lower.triangularView<Eigen::Lower>().solve(b.derived());
  }

  // solve (L L^T) y = b
  template <typename Derived>
  typename Derived::PlainObject solve(const Eigen::MatrixBase<Derived>& b) const {
    typename Derived::PlainObject y = lower.triangularView<Eigen::Lower>().solve(b.derived());
    return lower.transpose().triangularView<Eigen::Upper>().solve(y);
  }
};

inline CholPsd chol_psd(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw ShapeMismatch("chol_psd: matrix not square");
  const Eigen::Index d = cov.rows();
  const Matrix sym = 0.5 * (cov + cov.transpose());
  double scale = sym.diagonal().mean();
  if (!(scale > 0.0)) scale = 1.0;

  static constexpr double kMultipliers[] = {0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4};
  for (double mult : kMultipliers) {
    const double eps = mult * scale;
    Matrix trial = sym;
    trial.diagonal().array() += eps;
    Eigen::LLT<Matrix> llt(trial);
    if (llt.info() == Eigen::Success) {
      // LLT can succeed yet carry NaN on pathological input; reject those.
      Matrix lower = llt.matrixL();
      if (lower.allFinite() && (lower.diagonal().array() > 0.0).all())
        return CholPsd{std::move(lower), eps};
    }
    (void)d;
  }
  throw NotPositiveDefinite("chol_psd: factorization failed at maximum jitter");
}

inline double mvn_logpdf(const Vector& x, const Gaussian& g) {
  if (x.size() != g.mean.size()) throw ShapeMismatch("mvn_logpdf: dimension mismatch");
  const CholPsd f = chol_psd(g.cov);
  const Vector z = f.forward_solve(x - g.mean);
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + f.log_det() + z.squaredNorm());
}

// logpdf given a precomputed factor of the covariance (residual already formed)
inline double mvn_logpdf_residual(const Vector& resid, const CholPsd& cov_factor) {
  const Vector z = cov_factor.forward_solve(resid);
  return -0.5 * (static_cast<double>(resid.size()) * kLog2Pi + cov_factor.log_det() + z.squaredNorm());
}

inline Vector mvn_sample(Rng& rng, const Gaussian& g) {
  const CholPsd f = chol_psd(g.cov);
  Vector z(g.dim());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return g.mean + f.lower * z;
}

inline Vector mvn_sample(Rng& rng, const Vector& mean, const CholPsd& cov_factor) {
  Vector z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mean + cov_factor.lower * z;
}

inline double log_sum_exp(const std::vector<double>& v) {
  if (v.empty()) throw InvalidParameter("log_sum_exp: empty input");
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) throw AllNegInf("log_sum_exp: all entries are -inf");
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  if (v.size() == 0) throw InvalidParameter("log_sum_exp: empty input");
  const double m = v.maxCoeff();
  if (m == kNegInf) throw AllNegInf("log_sum_exp: all entries are -inf");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::exp(v(i) - m);
  return m + std::log(acc);
}

}  // namespace twistpf

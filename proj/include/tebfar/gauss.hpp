#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

#include "tebfar/errors.hpp"
#include "tebfar/rng.hpp"

namespace tebfar {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2*pi)

namespace detail {

inline void require_square(const Eigen::MatrixXd& m, const char* who) {
  if (m.rows() != m.cols())
    throw DimensionMismatch(std::string(who) + ": matrix is " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()));
}

inline void require_symmetric(const Eigen::MatrixXd& m, const char* who) {
  require_square(m, who);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = j + 1; i < m.rows(); ++i) {
      const double a = m(i, j);
      if (std::abs(a - m(j, i)) > 1e-12 * std::max(1.0, std::abs(a)))
        throw InvalidInput(std::string(who) + ": matrix is not symmetric at (" +
                           std::to_string(i) + ", " + std::to_string(j) + ")");
    }
}

}  // namespace detail

/// Cholesky factor with a scale-relative definiteness check.
///
/// Declares failure when any squared pivot falls at or below
/// dim * 1e-14 * max(diag(m)).
class Cholesky {
 public:
  explicit Cholesky(const Eigen::MatrixXd& m) {
    detail::require_symmetric(m, "cholesky");
    const Eigen::Index d = m.rows();
    if (d == 0) return;
    const double max_diag = m.diagonal().maxCoeff();
    const double floor = static_cast<double>(d) * 1e-14 * max_diag;
    llt_.compute(m);
    if (!(max_diag > 0.0) || llt_.info() != Eigen::Success)
      throw NotPositiveDefinite("factorization failed");
    const auto& l = llt_.matrixLLT();
    for (Eigen::Index i = 0; i < d; ++i) {
      const double pivot = l(i, i) * l(i, i);
      if (!(pivot > floor))
        throw NotPositiveDefinite("pivot " + std::to_string(i) + " = " + std::to_string(pivot));
    }
  }

  Eigen::MatrixXd matrix_l() const { return llt_.matrixL(); }
  Eigen::Index dim() const { return llt_.rows(); }

  double log_det() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

  template <typename Rhs>
  Eigen::MatrixXd solve(const Rhs& b) const {
    return llt_.solve(b);
  }

  // L^{-1} b
  template <typename Rhs>
  Eigen::MatrixXd solve_lower(const Rhs& b) const {
    Eigen::MatrixXd x = b;
    llt_.matrixL().solveInPlace(x);
    return x;
  }

  // L^{-T} b; if b ~ N(0, I) the result has covariance m^{-1}.
  template <typename Rhs>
  Eigen::MatrixXd solve_upper(const Rhs& b) const {
    Eigen::MatrixXd x = b;
    llt_.matrixU().solveInPlace(x);
    return x;
  }

  const Eigen::LLT<Eigen::MatrixXd>& llt() const { return llt_; }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

inline Eigen::MatrixXd cholesky(const Eigen::MatrixXd& m) { return Cholesky(m).matrix_l(); }

inline Eigen::VectorXd standard_normal_vector(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
  return z;
}

inline Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd z(rows, cols);
  // column-major fill keeps the draw order independent of Eigen's storage choice
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = rng.normal();
  return z;
}

/// mean + L z with z standard normal drawn from rng.
inline Eigen::VectorXd mvn_sample(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng) {
  if (mean.size() != cov.rows())
    throw DimensionMismatch("mvn_sample: mean has " + std::to_string(mean.size()) +
                            " entries, covariance is " + std::to_string(cov.rows()) + "-dimensional");
  const Cholesky chol(cov);
  const Eigen::VectorXd z = standard_normal_vector(mean.size(), rng);
  return mean + chol.llt().matrixL() * z;
}

/// Rows of the result are i.i.d. N(0, cov).
inline Eigen::MatrixXd mvn_sample_rows(Eigen::Index n, const Eigen::MatrixXd& cov, Rng& rng) {
  const Cholesky chol(cov);
  const Eigen::MatrixXd z = standard_normal_matrix(cov.rows(), n, rng);
  return (chol.llt().matrixL() * z).transpose();
}

/// Mean-zero Gaussian log density.
inline double gaussian_logpdf(const Eigen::VectorXd& z, const Eigen::MatrixXd& cov) {
  if (z.size() != cov.rows()) throw DimensionMismatch("gaussian_logpdf: vector/covariance sizes differ");
  const Cholesky chol(cov);
  const double quad = chol.solve_lower(z).squaredNorm();
  return -0.5 * (static_cast<double>(z.size()) * kLog2Pi + chol.log_det() + quad);
}

/// Sum of mean-zero log densities over the rows of data, sharing one factorization.
inline double gaussian_logpdf_rows(const Eigen::MatrixXd& data, const Eigen::MatrixXd& cov) {
  if (data.cols() != cov.rows()) throw DimensionMismatch("gaussian_logpdf_rows: column count differs");
  if (data.rows() == 0) return 0.0;
  const Cholesky chol(cov);
  const Eigen::MatrixXd w = chol.solve_lower(data.transpose());
  const double n = static_cast<double>(data.rows());
  const double d = static_cast<double>(data.cols());
  return -0.5 * (n * (d * kLog2Pi + chol.log_det()) + w.squaredNorm());
}

/// KL(N(0, s0) || N(0, s1)).
inline double kl_gaussian(const Eigen::MatrixXd& s0, const Eigen::MatrixXd& s1) {
  detail::require_square(s0, "kl_gaussian");
  if (s0.rows() != s1.rows()) throw DimensionMismatch("kl_gaussian: dimensions differ");
  const Cholesky c0(s0);
  const Cholesky c1(s1);
  const double d = static_cast<double>(s0.rows());
  // tr(s1^{-1} s0) = ||L1^{-1} L0||_F^2
  const Eigen::MatrixXd l0 = c0.matrix_l();
  const double trace = c1.solve_lower(l0).squaredNorm();
  return 0.5 * (trace - (c0.log_det() - c1.log_det()) - d);
}

struct ConditionalRegression {
  Eigen::VectorXd beta;
  double sigma2 = 0.0;
};

/// Regression of coordinate `response_index` on the others under N(0, joint_cov).
///
/// beta = Omega_xx^{-1} Omega_xy and sigma2 = Omega_yy - Omega_yx beta, with the
/// predictors kept in their original order.
inline ConditionalRegression conditional_regression(const Eigen::MatrixXd& joint_cov,
                                                    Eigen::Index response_index) {
  detail::require_symmetric(joint_cov, "conditional_regression");
  const Eigen::Index d = joint_cov.rows();
  if (response_index < 0 || response_index >= d)
    throw InvalidInput("conditional_regression: response index out of range");
  const Eigen::Index p = d - 1;
  Eigen::MatrixXd xx(p, p);
  Eigen::VectorXd xy(p);
  auto other = [&](Eigen::Index i) { return i < response_index ? i : i + 1; };
  for (Eigen::Index j = 0; j < p; ++j) {
    xy(j) = joint_cov(other(j), response_index);
    for (Eigen::Index i = 0; i < p; ++i) xx(i, j) = joint_cov(other(i), other(j));
  }
  const double yy = joint_cov(response_index, response_index);
  ConditionalRegression out;
  if (p == 0) {
    out.beta = Eigen::VectorXd(0);
    out.sigma2 = yy;
  } else {
    const Cholesky chol(xx);
    out.beta = chol.solve(xy);
    out.sigma2 = yy - xy.dot(out.beta);
  }
  if (!(out.sigma2 > 0.0)) throw NotPositiveDefinite("conditional variance is not positive");
  return out;
}

}  // namespace tebfar

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "tebfar/errors.hpp"
#include "tebfar/gauss.hpp"

namespace tebfar {

/// Joint Gaussian factor model for (x, y): (x, y) ~ N(0, lambda lambda^T + diag(sigma_diag)).
///
/// Row p of `lambda` and entry p of `sigma_diag` belong to the response. When
/// `y_variance_fixed` is set the sampler never touches sigma_diag[p].
struct FactorModel {
  Eigen::MatrixXd lambda;      // (p+1) x k
  Eigen::VectorXd sigma_diag;  // p+1
  bool y_variance_fixed = false;

  Eigen::Index p() const { return lambda.rows() - 1; }
  Eigen::Index k() const { return lambda.cols(); }
  Eigen::Index dim() const { return lambda.rows(); }
  double sigma_y2() const { return sigma_diag(dim() - 1); }
  auto gamma() const { return lambda.row(dim() - 1); }

  void validate() const {
    if (lambda.rows() < 1) throw InvalidInput("factor model needs at least the response row");
    if (sigma_diag.size() != lambda.rows())
      throw DimensionMismatch("sigma_diag has " + std::to_string(sigma_diag.size()) +
                              " entries for " + std::to_string(lambda.rows()) + " loading rows");
    if (!lambda.allFinite()) throw InvalidInput("loadings contain non-finite values");
    for (Eigen::Index j = 0; j < sigma_diag.size(); ++j)
      if (!(sigma_diag(j) > 0.0) || !std::isfinite(sigma_diag(j)))
        throw InvalidInput("idiosyncratic variance " + std::to_string(j) + " must be positive");
  }
};

/// Shrinkage prior hyperparameters: column multipliers delta_1 ~ Gamma(a1, 1),
/// delta_h ~ Gamma(a_rest, 1); local precisions xi ~ Gamma(xi_shape, xi_rate);
/// idiosyncratic variances ~ InvGamma(sigma_shape, sigma_rate).
struct MgpHyperparams {
  double a1 = 2.1;
  double a_rest = 3.1;
  double xi_shape = 1.5;
  double xi_rate = 1.5;
  double sigma_shape = 1.0;
  double sigma_rate = 0.3;

  void validate() const {
    for (double v : {a1, a_rest, xi_shape, xi_rate, sigma_shape, sigma_rate})
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("hyperparameters must be positive");
  }
};

struct MgpState {
  Eigen::MatrixXd xi;     // (p+1) x k
  Eigen::VectorXd delta;  // k
  Eigen::VectorXd tau;    // k, cumulative products of delta

  void recompute_tau() {
    tau.resize(delta.size());
    double running = 1.0;
    for (Eigen::Index l = 0; l < delta.size(); ++l) {
      running *= delta(l);
      tau(l) = running;
    }
  }
};

using InducedRegression = ConditionalRegression;

inline Eigen::MatrixXd implied_covariance(const FactorModel& m) {
  Eigen::MatrixXd cov = m.lambda * m.lambda.transpose();
  cov.diagonal() += m.sigma_diag;
  // exact symmetry for downstream checks
  return 0.5 * (cov + cov.transpose());
}

inline InducedRegression induced_regression(const FactorModel& m) {
  return conditional_regression(implied_covariance(m), m.p());
}

/// Closed form for single-factor models:
/// beta = gamma / (1 + sum lambda_j^2 / sigma_j^2) * (lambda_j / sigma_j^2)_j and
/// sigma2 = sigma_y^2 + gamma^2 / (1 + sum lambda_j^2 / sigma_j^2).
inline InducedRegression induced_regression_single_factor(const FactorModel& m) {
  if (m.k() != 1) throw InvalidInput("closed-form induced regression needs exactly one factor");
  const Eigen::Index p = m.p();
  const Eigen::VectorXd lam = m.lambda.col(0).head(p);
  const Eigen::VectorXd ratio = lam.cwiseQuotient(m.sigma_diag.head(p));
  const double gamma = m.lambda(p, 0);
  const double denom = 1.0 + lam.dot(ratio);
  return {gamma / denom * ratio, m.sigma_y2() + gamma * gamma / denom};
}

struct LoglikSplit {
  double joint = 0.0;
  double x_marginal = 0.0;
  double y_given_x = 0.0;
};

/// Log likelihood of data (n x (p+1), response last) under the model together
/// with its factorization into the x marginal and the induced y | x regression.
inline LoglikSplit loglik_split(const FactorModel& m, const Eigen::MatrixXd& data) {
  if (data.cols() != m.dim()) throw DimensionMismatch("loglik_split: data has wrong column count");
  LoglikSplit out;
  if (data.rows() == 0) return out;
  const Eigen::Index p = m.p();
  const Eigen::MatrixXd cov = implied_covariance(m);
  out.joint = gaussian_logpdf_rows(data, cov);
  out.x_marginal = p > 0 ? gaussian_logpdf_rows(data.leftCols(p), cov.topLeftCorner(p, p)) : 0.0;
  const InducedRegression reg = induced_regression(m);
  const Eigen::VectorXd resid = data.col(p) - data.leftCols(p) * reg.beta;
  const double n = static_cast<double>(data.rows());
  out.y_given_x = -0.5 * (n * (kLog2Pi + std::log(reg.sigma2)) + resid.squaredNorm() / reg.sigma2);
  return out;
}

}  // namespace tebfar

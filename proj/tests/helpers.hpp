#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "tebfar/factor_model.hpp"
#include "tebfar/gauss.hpp"
#include "tebfar/rng.hpp"

namespace testing_support {

inline Eigen::MatrixXd random_pd(Eigen::Index d, tebfar::Rng& rng, double ridge = 0.5) {
  const Eigen::MatrixXd a = tebfar::standard_normal_matrix(d, d, rng);
  Eigen::MatrixXd m = a * a.transpose() / static_cast<double>(d);
  m.diagonal().array() += ridge;
  return 0.5 * (m + m.transpose());
}

inline tebfar::FactorModel random_model(Eigen::Index p, Eigen::Index k, tebfar::Rng& rng) {
  tebfar::FactorModel m;
  m.lambda = tebfar::standard_normal_matrix(p + 1, k, rng);
  m.sigma_diag.resize(p + 1);
  for (Eigen::Index j = 0; j <= p; ++j) m.sigma_diag(j) = 0.1 + rng.uniform();
  return m;
}

// Full-matrix inverse of the joint covariance; beta and sigma2 from its last row.
inline std::pair<Eigen::VectorXd, double> brute_force_regression(const Eigen::MatrixXd& joint) {
  const Eigen::Index p = joint.rows() - 1;
  const Eigen::MatrixXd prec = joint.inverse();
  const double qyy = prec(p, p);
  Eigen::VectorXd beta = -prec.row(p).head(p).transpose() / qyy;
  return {beta, 1.0 / qyy};
}

// Conjugate gradient for symmetric positive definite systems.
inline Eigen::VectorXd conjugate_gradient(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double tol = 1e-14,
                                          int max_iter = 10000) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd r = b;
  Eigen::VectorXd d = r;
  double rs = r.squaredNorm();
  for (int it = 0; it < max_iter && std::sqrt(rs) > tol * b.norm(); ++it) {
    const Eigen::VectorXd ad = a * d;
    const double alpha = rs / d.dot(ad);
    x += alpha * d;
    r -= alpha * ad;
    const double rs_new = r.squaredNorm();
    d = r + (rs_new / rs) * d;
    rs = rs_new;
  }
  return x;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
  double se_mean() const { return std::sqrt(var / n); }
  double n = 0.0;
};

inline Moments moments(const std::vector<double>& v) {
  Moments m;
  m.n = static_cast<double>(v.size());
  for (double x : v) m.mean += x;
  m.mean /= m.n;
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= (m.n - 1.0);
  return m;
}

// Normalized density on a grid by trapezoid rule, from an unnormalized log density.
template <typename LogF>
std::vector<double> normalized_grid_density(LogF logf, const std::vector<double>& grid) {
  std::vector<double> lf(grid.size());
  double mx = -INFINITY;
  for (std::size_t i = 0; i < grid.size(); ++i) mx = std::max(mx, lf[i] = logf(grid[i]));
  std::vector<double> f(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) f[i] = std::exp(lf[i] - mx);
  double z = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) z += 0.5 * (f[i] + f[i - 1]) * (grid[i] - grid[i - 1]);
  for (double& v : f) v /= z;
  return f;
}

inline double gamma_logpdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

}  // namespace testing_support

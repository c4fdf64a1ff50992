#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "tebfar/cv.hpp"
#include "tebfar/dataio.hpp"
#include "tebfar/errors.hpp"
#include "tebfar/gauss.hpp"
#include "tebfar/parallel.hpp"

// Penalized least-squares competitors. Inputs are assumed centered (the
// intercept is absorbed by standardization) and penalties live on the
// (1/2n)||y - X b||^2 loss scale.
namespace tebfar::baselines {

inline Eigen::VectorXd ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw DimensionMismatch("ols_fit: X and y row counts differ");
  if (x.rows() < x.cols()) throw RankDeficient("ols_fit: fewer rows than columns");
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols())
    throw RankDeficient("ols_fit: design has rank " + std::to_string(qr.rank()) + " < " +
                        std::to_string(x.cols()));
  return qr.solve(y);
}

/// (X^T X + n * penalty * I)^{-1} X^T y
inline Eigen::VectorXd ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double penalty) {
  if (x.rows() != y.size()) throw DimensionMismatch("ridge_fit: X and y row counts differ");
  if (!(penalty >= 0.0)) throw InvalidInput("ridge_fit: penalty must be nonnegative");
  if (penalty == 0.0) return ols_fit(x, y);
  Eigen::MatrixXd a = x.transpose() * x;
  a.diagonal().array() += static_cast<double>(x.rows()) * penalty;
  return Cholesky(0.5 * (a + a.transpose())).solve(x.transpose() * y);
}

struct LassoResult {
  Eigen::VectorXd beta;
  bool converged = false;
  int sweeps = 0;
};

struct LassoOptions {
  double tol = 1e-8;
  int max_sweeps = 100000;
};

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

/// Cyclic coordinate descent for (1/2n)||y - X b||^2 + penalty * ||b||_1, run on
/// the Gram matrix so a coordinate step costs O(p). Stops when the largest
/// coordinate change in a sweep is below tol; when the sweep budget runs out the
/// partial solution is returned with converged = false.
inline LassoResult lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double penalty,
                             const LassoOptions& opts = {}, const Eigen::VectorXd* warm_start = nullptr) {
  if (x.rows() != y.size()) throw DimensionMismatch("lasso_fit: X and y row counts differ");
  if (!(penalty > 0.0)) throw InvalidInput("lasso_fit: penalty must be positive");
  const Eigen::Index p = x.cols();
  const double nd = static_cast<double>(x.rows());
  const Eigen::MatrixXd gram = x.transpose() * x / nd;
  LassoResult out;
  out.beta = warm_start ? *warm_start : Eigen::VectorXd::Zero(p);
  if (out.beta.size() != p) throw DimensionMismatch("lasso_fit: warm start has the wrong length");
  // grad = X^T (y - X b) / n
  Eigen::VectorXd grad = x.transpose() * y / nd - gram * out.beta;
  for (out.sweeps = 1; out.sweeps <= opts.max_sweeps; ++out.sweeps) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double gjj = gram(j, j);
      if (gjj <= 0.0) continue;
      const double old = out.beta(j);
      const double updated = soft_threshold(grad(j) + gjj * old, penalty) / gjj;
      if (updated != old) {
        grad -= (updated - old) * gram.col(j);
        out.beta(j) = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    if (max_change < opts.tol) {
      out.converged = true;
      return out;
    }
  }
  out.sweeps = opts.max_sweeps;
  return out;
}

/// Solutions along `penalties` (any order), each warm-started from the fit at
/// the next larger penalty.
inline std::vector<Eigen::VectorXd> lasso_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                               const std::vector<double>& penalties, const LassoOptions& opts = {}) {
  std::vector<std::size_t> order(penalties.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return penalties[a] > penalties[b]; });
  std::vector<Eigen::VectorXd> out(penalties.size());
  Eigen::VectorXd warm = Eigen::VectorXd::Zero(x.cols());
  for (std::size_t i : order) {
    warm = lasso_fit(x, y, penalties[i], opts, &warm).beta;
    out[i] = warm;
  }
  return out;
}

inline double lasso_lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return (x.transpose() * y).cwiseAbs().maxCoeff() / static_cast<double>(x.rows());
}

inline std::vector<double> log_spaced(double hi, double lo, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    v[static_cast<std::size_t>(i)] =
        n == 1 ? hi : std::exp(std::log(hi) + (std::log(lo) - std::log(hi)) * i / (n - 1));
  return v;
}

/// 50 values from lambda_max down to 1e-3 lambda_max, returned increasing.
inline std::vector<double> lasso_default_grid(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const double top = lasso_lambda_max(x, y);
  auto v = log_spaced(top, 1e-3 * top, 50);
  std::reverse(v.begin(), v.end());
  return v;
}

/// 50 log-spaced values in [1e-4, 10], increasing.
inline std::vector<double> ridge_default_grid() {
  auto v = log_spaced(10.0, 1e-4, 50);
  std::reverse(v.begin(), v.end());
  return v;
}

struct TuneResult {
  double best_penalty = 0.0;
  std::vector<double> grid;
  std::vector<double> curve;
};

/// K-fold CV over a penalty grid for fitter(X, y, penalty) -> beta. Folds are
/// re-standardized on their training complement. Ties go to the larger penalty,
/// so pass the grid in increasing order.
template <typename Fitter>
TuneResult cv_tune(Fitter&& fitter, const Dataset& data, const std::vector<double>& grid, const CvPlan& plan,
                   int jobs = 1) {
  if (grid.empty()) throw ConfigError("penalty grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ConfigError("penalty grid must be strictly increasing");
  const auto folds = make_folds(plan.folds_for(data.n()), plan.n_folds);
  std::vector<FoldData> sets;
  for (const auto& f : folds) sets.push_back(fold_data(data, f));
  const std::size_t nf = sets.size();
  std::vector<double> cell(grid.size() * nf);
  parallel_for(grid.size() * nf, jobs, [&](std::size_t c) {
    const auto& fd = sets[c % nf];
    const Eigen::VectorXd beta = fitter(fd.train.x, fd.train.y, grid[c / nf]);
    cell[c] = mse(fd.test.x * beta, fd.test.y);
  });
  TuneResult out;
  out.grid = grid;
  out.curve.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (std::size_t f = 0; f < nf; ++f) s += cell[g * nf + f];
    out.curve[g] = s / static_cast<double>(nf);
  }
  out.best_penalty = grid[argmin_prefer_last(out.curve)];
  return out;
}

/// cv_tune for the lasso, fitting each fold's whole path with warm starts.
inline TuneResult cv_tune_lasso(const Dataset& data, const std::vector<double>& grid, const CvPlan& plan,
                                int jobs = 1, const LassoOptions& opts = {}) {
  if (grid.empty()) throw ConfigError("penalty grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ConfigError("penalty grid must be strictly increasing");
  const auto folds = make_folds(plan.folds_for(data.n()), plan.n_folds);
  const std::size_t nf = folds.size();
  std::vector<double> cell(grid.size() * nf);
  parallel_for(nf, jobs, [&](std::size_t f) {
    const FoldData fd = fold_data(data, folds[f]);
    const auto path = lasso_path(fd.train.x, fd.train.y, grid, opts);
    for (std::size_t g = 0; g < grid.size(); ++g) cell[g * nf + f] = mse(fd.test.x * path[g], fd.test.y);
  });
  TuneResult out;
  out.grid = grid;
  out.curve.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (std::size_t f = 0; f < nf; ++f) s += cell[g * nf + f];
    out.curve[g] = s / static_cast<double>(nf);
  }
  out.best_penalty = grid[argmin_prefer_last(out.curve)];
  return out;
}

inline Eigen::VectorXd lasso_beta(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double penalty) {
  return lasso_fit(x, y, penalty).beta;
}

}  // namespace tebfar::baselines

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "tebfar/dataio.hpp"
#include "tebfar/errors.hpp"
#include "tebfar/factor_model.hpp"
#include "tebfar/gauss.hpp"
#include "tebfar/rng.hpp"

// Best rank-k plus diagonal Gaussian approximation of N(0, s0) in
// KL(truth || model). This is maximum-likelihood factor analysis with s0 in
// place of the sample covariance, solved by EM.
namespace tebfar {

inline constexpr double kPsiFloor = 1e-10;

struct EmOptions {
  double tol = 1e-10;
  int max_iter = 10000;
  int n_restarts = 10;
  double jitter_var = 0.1;
  std::uint64_t seed = 0;
};

struct EmFit {
  FactorModel model;
  double kl = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

inline double model_kl(const Eigen::MatrixXd& s0, const FactorModel& m) {
  return kl_gaussian(s0, implied_covariance(m));
}

/// One EM update. The last diagonal entry stays put when `fix_last` is set;
/// the M-step decouples across diagonal entries so this keeps monotonicity.
inline FactorModel em_step(const Eigen::MatrixXd& s0, const FactorModel& m, bool fix_last) {
  const Eigen::Index k = m.k();
  const Eigen::Index d = m.dim();
  const Eigen::MatrixXd a = m.lambda.transpose() * m.sigma_diag.cwiseInverse().asDiagonal();  // k x d
  Eigen::MatrixXd g_inv = a * m.lambda;
  g_inv.diagonal().array() += 1.0;
  const Cholesky gc(0.5 * (g_inv + g_inv.transpose()));
  const Eigen::MatrixXd g = gc.solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd b = g * a;  // E[eta | z] = B z
  const Eigen::MatrixXd bs = b * s0;  // k x d
  Eigen::MatrixXd mm = g + bs * b.transpose();
  mm = 0.5 * (mm + mm.transpose());
  FactorModel out = m;
  out.lambda = Cholesky(mm).solve(bs).transpose();  // s0 B^T M^{-1}
  const Eigen::VectorXd psi = s0.diagonal() - (out.lambda.array() * bs.transpose().array()).rowwise().sum().matrix();
  const Eigen::Index free = fix_last ? d - 1 : d;
  for (Eigen::Index j = 0; j < free; ++j) out.sigma_diag(j) = std::max(kPsiFloor, psi(j));
  return out;
}

/// Eigen-informed start: Psi = 0.5 diag(s0) on free entries, Lambda from the
/// top-k eigenpairs of s0 - Psi, plus N(0, jitter_var) noise when jitter > 0.
inline FactorModel em_initial_model(const Eigen::MatrixXd& s0, Eigen::Index k, std::optional<double> fixed_y_var,
                                    double jitter_var, Rng& rng) {
  const Eigen::Index d = s0.rows();
  FactorModel m;
  m.sigma_diag = 0.5 * s0.diagonal();
  if (fixed_y_var) m.sigma_diag(d - 1) = *fixed_y_var;
  m.y_variance_fixed = fixed_y_var.has_value();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s0 - Eigen::MatrixXd(m.sigma_diag.asDiagonal()));
  m.lambda.resize(d, k);
  for (Eigen::Index l = 0; l < k; ++l) {
    const Eigen::Index idx = d - 1 - l;  // eigenvalues ascend
    m.lambda.col(l) = es.eigenvectors().col(idx) * std::sqrt(std::max(es.eigenvalues()(idx), 1e-6));
  }
  if (jitter_var > 0.0) m.lambda += std::sqrt(jitter_var) * standard_normal_matrix(d, k, rng);
  return m;
}

/// Runs EM from `start` until the KL change drops below opts.tol.
inline EmFit em_refine(const Eigen::MatrixXd& s0, FactorModel start, const EmOptions& opts) {
  EmFit fit;
  fit.model = std::move(start);
  fit.kl = model_kl(s0, fit.model);
  for (fit.iterations = 1; fit.iterations <= opts.max_iter; ++fit.iterations) {
    FactorModel next = em_step(s0, fit.model, fit.model.y_variance_fixed);
    const double kl = model_kl(s0, next);
    const double change = fit.kl - kl;
    fit.model = std::move(next);
    fit.kl = kl;
    if (std::abs(change) < opts.tol) {
      fit.converged = true;
      return fit;
    }
  }
  fit.iterations = opts.max_iter;
  return fit;
}

/// Best of opts.n_restarts EM runs (restart 0 unjittered), plus `warm_start`
/// when given. Lowest KL wins; ties go to the earlier candidate.
inline EmFit population_em_fit(const Eigen::MatrixXd& s0, Eigen::Index k, std::optional<double> fixed_y_var,
                               const EmOptions& opts = {}, const std::optional<FactorModel>& warm_start = std::nullopt) {
  detail::require_symmetric(s0, "population_em_fit");
  const Eigen::Index d = s0.rows();
  if (k < 1 || k >= d) throw InvalidInput("population_em_fit: need 1 <= k < dim");
  if (fixed_y_var && !(*fixed_y_var > 0.0)) throw InvalidInput("population_em_fit: fixed variance must be positive");
  Cholesky check(s0);
  (void)check;

  EmFit best;
  auto consider = [&](EmFit candidate) {
    if (candidate.kl < best.kl) best = std::move(candidate);
  };
  if (warm_start) {
    FactorModel w = *warm_start;
    if (w.dim() != d || w.k() != k) throw DimensionMismatch("warm start has the wrong shape");
    w.y_variance_fixed = fixed_y_var.has_value();
    if (fixed_y_var) w.sigma_diag(d - 1) = *fixed_y_var;
    consider(em_refine(s0, std::move(w), opts));
  }
  const std::uint64_t key = fixed_y_var ? seed_key(*fixed_y_var) : 0xffffffffffffffffULL;
  for (int r = 0; r < std::max(1, opts.n_restarts); ++r) {
    Rng rng(derive_seed(opts.seed, {key, static_cast<std::uint64_t>(r)}));
    consider(em_refine(s0, em_initial_model(s0, k, fixed_y_var, r == 0 ? 0.0 : opts.jitter_var, rng), opts));
  }
  return best;
}

/// min(||a - b||^2, ||a + b||^2)
inline double loading_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DimensionMismatch("loading_distance: lengths differ");
  return std::min((a - b).squaredNorm(), (a + b).squaredNorm());
}

/// Per-observation expected log likelihoods under z ~ N(0, s0).
inline LoglikSplit expected_loglik_split(const FactorModel& model, const Eigen::MatrixXd& s0) {
  const Eigen::Index d = model.dim();
  if (s0.rows() != d || s0.cols() != d) throw DimensionMismatch("expected_loglik_split: dimensions differ");
  const Eigen::Index p = d - 1;
  const Eigen::MatrixXd cov = implied_covariance(model);
  auto expected = [](const Eigen::MatrixXd& c, const Eigen::MatrixXd& s) {
    const Cholesky chol(c);
    const double trace = chol.solve(s).trace();
    return -0.5 * (static_cast<double>(c.rows()) * kLog2Pi + chol.log_det() + trace);
  };
  LoglikSplit out;
  out.joint = expected(cov, s0);
  out.x_marginal = p > 0 ? expected(cov.topLeftCorner(p, p), s0.topLeftCorner(p, p)) : 0.0;
  const InducedRegression reg = induced_regression(model);
  const Eigen::VectorXd sxy = s0.col(p).head(p);
  const double q = s0(p, p) - 2.0 * reg.beta.dot(sxy) + reg.beta.dot(s0.topLeftCorner(p, p) * reg.beta);
  out.y_given_x = -0.5 * (kLog2Pi + std::log(reg.sigma2) + q / reg.sigma2);
  return out;
}

struct KlScanRow {
  double sigma_y2 = 0.0;
  FactorModel model;
  double kl = 0.0;
  std::vector<double> distance_to_column;
  LoglikSplit ell;
};

struct KlScanResult {
  std::vector<KlScanRow> rows;
};

/// Fits the constrained optimum at each grid value, warm-starting from the
/// previous point's solution in addition to fresh restarts.
inline KlScanResult scan_sigma_grid(const Eigen::MatrixXd& s0, const Eigen::MatrixXd& true_lambda, Eigen::Index k,
                                    const std::vector<double>& grid, const EmOptions& opts = {}) {
  if (true_lambda.rows() != s0.rows()) throw DimensionMismatch("scan_sigma_grid: true loadings have wrong row count");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) throw InvalidInput("scan_sigma_grid: grid values must be positive");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw InvalidInput("scan_sigma_grid: grid must be increasing");
  }
  KlScanResult out;
  std::optional<FactorModel> previous;
  for (double v : grid) {
    EmFit fit = population_em_fit(s0, k, v, opts, previous);
    KlScanRow row;
    row.sigma_y2 = v;
    row.kl = fit.kl;
    for (Eigen::Index c = 0; c < true_lambda.cols(); ++c) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index l = 0; l < fit.model.k(); ++l)
        best = std::min(best, loading_distance(fit.model.lambda.col(l), true_lambda.col(c)));
      row.distance_to_column.push_back(best);
    }
    row.ell = expected_loglik_split(fit.model, s0);
    previous = fit.model;
    row.model = std::move(fit.model);
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline void write_kl_scan(std::ostream& out, const KlScanResult& scan) {
  const std::size_t m = scan.rows.empty() ? 0 : scan.rows.front().distance_to_column.size();
  out << "sigma_y2,kl";
  for (std::size_t c = 0; c < m; ++c) out << ",dist_col_" << (c + 1);
  out << ",ell_joint,ell_x,ell_y_given_x\n";
  using detail::format_double;
  for (const auto& r : scan.rows) {
    out << format_double(r.sigma_y2) << ',' << format_double(r.kl);
    for (double dist : r.distance_to_column) out << ',' << format_double(dist);
    out << ',' << format_double(r.ell.joint) << ',' << format_double(r.ell.x_marginal) << ','
        << format_double(r.ell.y_given_x) << '\n';
  }
}

}  // namespace tebfar

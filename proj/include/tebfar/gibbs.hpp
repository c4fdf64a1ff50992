#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tebfar/dataio.hpp"
#include "tebfar/errors.hpp"
#include "tebfar/factor_model.hpp"
#include "tebfar/gauss.hpp"
#include "tebfar/rng.hpp"

namespace tebfar {

inline constexpr double kVarianceFloor = 1e-12;

/// Either the response idiosyncratic variance is held at `sigma_y2` (targeted
/// empirical Bayes) or it is sampled under its inverse-gamma prior.
struct SamplerMode {
  enum class Kind { Tebfar, Jbfm };
  Kind kind = Kind::Jbfm;
  double sigma_y2 = 0.0;

  static SamplerMode tebfar(double v) { return {Kind::Tebfar, v}; }
  static SamplerMode jbfm() { return {Kind::Jbfm, 0.0}; }
  bool fixed() const { return kind == Kind::Tebfar; }
};

inline int default_k_max(Eigen::Index p) {
  const auto bound = static_cast<int>(std::floor(5.0 + 2.0 * std::log(static_cast<double>(p + 1))));
  return std::max(1, std::min(static_cast<int>(p + 1), bound));
}

struct SamplerConfig {
  int iterations = 5000;
  int burn_in = 2500;
  int thin = 5;
  std::optional<int> k_max;  // defaults to default_k_max(p)
  std::uint64_t seed = 0;
  SamplerMode mode = SamplerMode::jbfm();
  MgpHyperparams hyper;

  int retained() const { return (iterations - burn_in) / thin; }
  int truncation(Eigen::Index p) const { return k_max.value_or(default_k_max(p)); }

  void validate() const {
    if (iterations < 1) throw ConfigError("iterations must be positive");
    if (burn_in < 0 || burn_in >= iterations) throw ConfigError("burn-in must satisfy 0 <= burn_in < iterations");
    if (thin < 1) throw ConfigError("thin must be at least 1");
    if (k_max && *k_max < 1) throw ConfigError("k_max must be at least 1");
    if (mode.fixed() && !(mode.sigma_y2 > 0.0 && std::isfinite(mode.sigma_y2)))
      throw ConfigError("fixed sigma_y^2 must be a positive finite value");
    hyper.validate();
  }
};

struct Draw {
  FactorModel model;
  InducedRegression regression;
};

struct PosteriorDraws {
  std::vector<Draw> draws;
  SamplerConfig config;
  int k = 0;
  Eigen::Index p = 0;

  bool empty() const { return draws.empty(); }
  std::size_t size() const { return draws.size(); }

  Eigen::VectorXd mean_beta() const {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (const auto& d : draws) b += d.regression.beta;
    return draws.empty() ? b : Eigen::VectorXd(b / static_cast<double>(draws.size()));
  }

  Eigen::MatrixXd mean_implied_covariance() const {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(p + 1, p + 1);
    for (const auto& d : draws) c += implied_covariance(d.model);
    return draws.empty() ? c : Eigen::MatrixXd(c / static_cast<double>(draws.size()));
  }

  double mean_sigma_y2() const {
    double s = 0.0;
    for (const auto& d : draws) s += d.model.sigma_y2();
    return draws.empty() ? 0.0 : s / static_cast<double>(draws.size());
  }
};

// ---------------------------------------------------------------------------
// Full conditionals. Each takes the conditioning values explicitly; `data` is
// n x (p+1) with the response last.
// ---------------------------------------------------------------------------

struct FactorConditional {
  Eigen::MatrixXd mean;  // n x k, row i is E[eta_i | rest]
  Eigen::MatrixXd cov;   // k x k, shared by all rows
};

/// eta_i | rest ~ N(V Lambda^T Sigma^{-1} z_i, V), V = (I + Lambda^T Sigma^{-1} Lambda)^{-1}.
inline FactorConditional factor_conditional(const FactorModel& m, const Eigen::MatrixXd& data) {
  const Eigen::MatrixXd a = m.lambda.transpose() * m.sigma_diag.cwiseInverse().asDiagonal();
  Eigen::MatrixXd prec = a * m.lambda;
  prec.diagonal().array() += 1.0;
  const Cholesky chol(0.5 * (prec + prec.transpose()));
  FactorConditional out;
  out.cov = chol.solve(Eigen::MatrixXd::Identity(m.k(), m.k()));
  out.mean = chol.solve(a * data.transpose()).transpose();
  return out;
}

inline Eigen::MatrixXd sample_factors(const FactorModel& m, const Eigen::MatrixXd& data, Rng& rng) {
  if (data.cols() != m.dim()) throw DimensionMismatch("sample_factors: data has wrong column count");
  const Eigen::Index k = m.k();
  const Eigen::Index n = data.rows();
  const Eigen::MatrixXd a = m.lambda.transpose() * m.sigma_diag.cwiseInverse().asDiagonal();
  Eigen::MatrixXd prec = a * m.lambda;
  prec.diagonal().array() += 1.0;
  const Cholesky chol(0.5 * (prec + prec.transpose()));
  // k x n: mean columns plus L^{-T} u
  Eigen::MatrixXd eta_t = chol.solve(a * data.transpose());
  eta_t += chol.solve_upper(standard_normal_matrix(k, n, rng));
  return eta_t.transpose();
}

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

namespace detail {

inline Eigen::MatrixXd loading_row_precision(const Eigen::MatrixXd& gram, const Eigen::VectorXd& prior_prec,
                                             double sigma2) {
  Eigen::MatrixXd prec = gram / sigma2;
  prec.diagonal() += prior_prec;
  return 0.5 * (prec + prec.transpose());
}

}  // namespace detail

/// Row j of Lambda | rest ~ N(W eta^T z_j / sigma_j^2, W),
/// W = (diag(xi_j * tau) + eta^T eta / sigma_j^2)^{-1}.
inline GaussianMoments loading_row_conditional(const FactorModel& m, const MgpState& mgp,
                                               const Eigen::MatrixXd& eta, const Eigen::MatrixXd& data,
                                               Eigen::Index j) {
  const double s2 = m.sigma_diag(j);
  const Eigen::VectorXd prior_prec = mgp.xi.row(j).transpose().cwiseProduct(mgp.tau);
  const Cholesky chol(detail::loading_row_precision(eta.transpose() * eta, prior_prec, s2));
  GaussianMoments out;
  out.cov = chol.solve(Eigen::MatrixXd::Identity(m.k(), m.k()));
  out.mean = chol.solve(eta.transpose() * data.col(j) / s2);
  return out;
}

inline Eigen::MatrixXd sample_loadings(const FactorModel& m, const MgpState& mgp, const Eigen::MatrixXd& eta,
                                       const Eigen::MatrixXd& data, Rng& rng) {
  const Eigen::Index k = m.k();
  const Eigen::Index d = m.dim();
  if (eta.cols() != k || eta.rows() != data.rows() || data.cols() != d)
    throw DimensionMismatch("sample_loadings: factor scores and data disagree");
  const Eigen::MatrixXd gram = eta.transpose() * eta;
  const Eigen::MatrixXd cross = eta.transpose() * data;  // k x d
  Eigen::MatrixXd lambda(d, k);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double s2 = m.sigma_diag(j);
    const Eigen::VectorXd prior_prec = mgp.xi.row(j).transpose().cwiseProduct(mgp.tau);
    const Cholesky chol(detail::loading_row_precision(gram, prior_prec, s2));
    Eigen::VectorXd row = chol.solve(cross.col(j) / s2);
    row += chol.solve_upper(standard_normal_vector(k, rng));
    lambda.row(j) = row.transpose();
  }
  return lambda;
}

/// sigma_j^2 | rest ~ InvGamma(a + n/2, b + SSR_j / 2); the response entry is
/// left alone when the model marks it fixed.
inline Eigen::VectorXd sample_idiosyncratic(const FactorModel& m, const Eigen::MatrixXd& eta,
                                            const Eigen::MatrixXd& data, const MgpHyperparams& hyper, Rng& rng) {
  const Eigen::Index d = m.dim();
  Eigen::VectorXd ssr = Eigen::VectorXd::Zero(d);
  if (data.rows() > 0) ssr = (data - eta * m.lambda.transpose()).colwise().squaredNorm().transpose();
  const double shape = hyper.sigma_shape + 0.5 * static_cast<double>(data.rows());
  Eigen::VectorXd out = m.sigma_diag;
  const Eigen::Index last = m.y_variance_fixed ? d - 1 : d;
  for (Eigen::Index j = 0; j < last; ++j)
    out(j) = std::max(kVarianceFloor, rng.inverse_gamma(shape, hyper.sigma_rate + 0.5 * ssr(j)));
  return out;
}

/// xi_jl | rest ~ Gamma(xi_shape + 1/2, xi_rate + tau_l lambda_jl^2 / 2).
inline Eigen::MatrixXd sample_local_precisions(const FactorModel& m, const MgpState& mgp,
                                               const MgpHyperparams& hyper, Rng& rng) {
  Eigen::MatrixXd xi(m.dim(), m.k());
  const double shape = hyper.xi_shape + 0.5;
  for (Eigen::Index l = 0; l < m.k(); ++l)
    for (Eigen::Index j = 0; j < m.dim(); ++j) {
      const double lam = m.lambda(j, l);
      xi(j, l) = std::max(kVarianceFloor, rng.gamma(shape, hyper.xi_rate + 0.5 * mgp.tau(l) * lam * lam));
    }
  return xi;
}

/// Shape and rate of delta_h | rest with the other multipliers at their current values.
inline std::pair<double, double> column_multiplier_conditional(const FactorModel& m, const MgpState& mgp,
                                                               const MgpHyperparams& hyper, Eigen::Index h) {
  const Eigen::Index k = m.k();
  const double rows = static_cast<double>(m.dim());
  const double a = h == 0 ? hyper.a1 : hyper.a_rest;
  const double shape = a + 0.5 * rows * static_cast<double>(k - h);
  double tau_minus = 1.0;  // prod_{m <= l, m != h} delta_m
  for (Eigen::Index l = 0; l < h; ++l) tau_minus *= mgp.delta(l);
  double acc = 0.0;
  for (Eigen::Index l = h; l < k; ++l) {
    if (l > h) tau_minus *= mgp.delta(l);
    const double weighted = (mgp.xi.col(l).array() * m.lambda.col(l).array().square()).sum();
    acc += tau_minus * weighted;
  }
  return {shape, 1.0 + 0.5 * acc};
}

/// Sequential update of delta_1..delta_k; tau is recomputed afterwards.
inline MgpState sample_column_multipliers(const FactorModel& m, const MgpState& mgp,
                                          const MgpHyperparams& hyper, Rng& rng) {
  MgpState out = mgp;
  for (Eigen::Index h = 0; h < m.k(); ++h) {
    const auto [shape, rate] = column_multiplier_conditional(m, out, hyper, h);
    out.delta(h) = std::max(kVarianceFloor, rng.gamma(shape, rate));
  }
  out.recompute_tau();
  return out;
}

// ---------------------------------------------------------------------------
// Chain driver
// ---------------------------------------------------------------------------

/// One MCMC chain over standardized data. Owns its state; not thread safe, but
/// independent chains may run concurrently.
class GibbsChain {
 public:
  GibbsChain(Eigen::MatrixXd data, SamplerConfig config)
      : data_(std::move(data)), config_(std::move(config)), rng_(config_.seed) {
    config_.validate();
    if (data_.cols() < 1) throw DimensionMismatch("data needs at least a response column");
    if (!data_.allFinite()) throw InvalidInput("data contain non-finite values");
    const Eigen::Index d = data_.cols();
    const Eigen::Index k = config_.truncation(d - 1);
    const auto& h = config_.hyper;

    model_.lambda = standard_normal_matrix(d, k, rng_);
    model_.sigma_diag = Eigen::VectorXd::Ones(d);
    model_.y_variance_fixed = config_.mode.fixed();
    if (model_.y_variance_fixed) model_.sigma_diag(d - 1) = config_.mode.sigma_y2;

    mgp_.xi = Eigen::MatrixXd::Constant(d, k, h.xi_shape / h.xi_rate);
    mgp_.delta = Eigen::VectorXd::Constant(k, h.a_rest);
    mgp_.delta(0) = h.a1;
    mgp_.recompute_tau();
  }

  /// Replaces the loadings and idiosyncratic variances (e.g. to start at known values).
  void set_model(FactorModel m) {
    m.validate();
    if (m.dim() != model_.dim()) throw DimensionMismatch("set_model: wrong dimension");
    m.y_variance_fixed = config_.mode.fixed();
    if (m.y_variance_fixed) m.sigma_diag(m.dim() - 1) = config_.mode.sigma_y2;
    mgp_.xi.conservativeResize(m.dim(), m.k());
    mgp_.delta.conservativeResize(m.k());
    for (Eigen::Index l = model_.k(); l < m.k(); ++l) {
      mgp_.xi.col(l).setConstant(config_.hyper.xi_shape / config_.hyper.xi_rate);
      mgp_.delta(l) = l == 0 ? config_.hyper.a1 : config_.hyper.a_rest;
    }
    mgp_.recompute_tau();
    model_ = std::move(m);
  }

  void sweep() {
    try {
      eta_ = sample_factors(model_, data_, rng_);
      model_.lambda = sample_loadings(model_, mgp_, eta_, data_, rng_);
      model_.sigma_diag = sample_idiosyncratic(model_, eta_, data_, config_.hyper, rng_);
      mgp_.xi = sample_local_precisions(model_, mgp_, config_.hyper, rng_);
      mgp_ = sample_column_multipliers(model_, mgp_, config_.hyper, rng_);
    } catch (const NotPositiveDefinite& e) {
      throw NumericError("Gibbs sweep " + std::to_string(iteration_) + " failed (" + e.what() + "); " +
                         state_summary());
    }
    if (!model_.lambda.allFinite() || !model_.sigma_diag.allFinite())
      throw NumericError("Gibbs sweep " + std::to_string(iteration_) + " produced non-finite values; " +
                         state_summary());
    ++iteration_;
  }

  PosteriorDraws run() {
    PosteriorDraws out;
    out.config = config_;
    out.k = static_cast<int>(model_.k());
    out.p = model_.p();
    out.draws.reserve(static_cast<std::size_t>(config_.retained()));
    for (int it = 0; it < config_.iterations; ++it) {
      sweep();
      if (it >= config_.burn_in && (it - config_.burn_in + 1) % config_.thin == 0) {
        Draw d{model_, induced_regression(model_)};
        out.draws.push_back(std::move(d));
      }
    }
    return out;
  }

  const FactorModel& model() const { return model_; }
  const MgpState& mgp() const { return mgp_; }
  const Eigen::MatrixXd& factors() const { return eta_; }
  const Eigen::MatrixXd& data() const { return data_; }
  long iteration() const { return iteration_; }

 private:
  std::string state_summary() const {
    std::ostringstream os;
    os << "state: k=" << model_.k() << " sigma_diag=[" << model_.sigma_diag.transpose()
       << "] delta=[" << mgp_.delta.transpose() << "] max|lambda|=" << model_.lambda.cwiseAbs().maxCoeff();
    return os.str();
  }

  Eigen::MatrixXd data_;
  SamplerConfig config_;
  Rng rng_;
  FactorModel model_;
  MgpState mgp_;
  Eigen::MatrixXd eta_;
  long iteration_ = 0;
};

/// Runs one chain on an n x (p+1) joint matrix (response last).
inline PosteriorDraws run_chain(const Eigen::MatrixXd& joint_data, const SamplerConfig& config) {
  return GibbsChain(joint_data, config).run();
}

inline PosteriorDraws run_chain(const Dataset& data, const SamplerConfig& config) {
  return run_chain(data.joint(), config);
}

}  // namespace tebfar

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tebfar/dataio.hpp"
#include "tebfar/errors.hpp"
#include "tebfar/factor_model.hpp"
#include "tebfar/gauss.hpp"
#include "tebfar/rng.hpp"

namespace tebfar::sim {

enum class Scenario { One, Two, Three, Motivating, Null };

inline Scenario parse_scenario(const std::string& s) {
  if (s == "1") return Scenario::One;
  if (s == "2") return Scenario::Two;
  if (s == "3") return Scenario::Three;
  if (s == "motivating") return Scenario::Motivating;
  if (s == "null") return Scenario::Null;
  throw ConfigError("unknown scenario '" + s + "' (expected 1, 2, 3, motivating or null)");
}

inline std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::One: return "1";
    case Scenario::Two: return "2";
    case Scenario::Three: return "3";
    case Scenario::Motivating: return "motivating";
    case Scenario::Null: return "null";
  }
  return "?";
}

struct ScenarioSpec {
  Scenario scenario = Scenario::One;
  Eigen::Index n_train = 200;
  Eigen::Index n_test = 100;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_train < 1 || n_test < 1) throw ConfigError("n_train and n_test must be at least 1");
  }
};

/// Ground truth plus train/test samples. Factor scenarios carry `model`;
/// regression scenarios carry `beta`. `joint_cov` is always the population
/// covariance of (x, y).
struct SimulatedData {
  ScenarioSpec spec;
  std::optional<FactorModel> model;
  std::optional<Eigen::VectorXd> beta;
  Eigen::MatrixXd joint_cov;
  Dataset train;
  Dataset test;
  Eigen::MatrixXd train_factors;  // factor scores behind the training rows (factor scenarios)
};

/// The 10-variable, two-factor example: nine predictors, response last, all
/// idiosyncratic variances 0.2.
inline FactorModel motivating_model() {
  FactorModel m;
  m.lambda.resize(10, 2);
  m.lambda.col(0) << 0, -4, 0, -8, -4, -6, 1, -1, 4, 0;
  m.lambda.col(1) << 1, 0, 0, -1, 0, 1, 0, 1, 0, 1;
  m.sigma_diag = Eigen::VectorXd::Constant(10, 0.2);
  return m;
}

/// Rescales rows so the implied covariance has unit diagonal.
inline FactorModel unit_variance(const FactorModel& m) {
  const Eigen::VectorXd var = m.lambda.rowwise().squaredNorm() + m.sigma_diag;
  const Eigen::VectorXd scale = var.cwiseSqrt().cwiseInverse();
  FactorModel out = m;
  out.lambda = scale.asDiagonal() * m.lambda;
  out.sigma_diag = m.sigma_diag.cwiseProduct(scale.cwiseAbs2());
  return out;
}

namespace detail {

// `per_column` distinct rows out of `rows`, each Exponential(1), then the
// column is scaled to Euclidean norm norms[l].
inline Eigen::MatrixXd sparse_exponential_loadings(Eigen::Index rows, const std::vector<double>& norms,
                                                   Eigen::Index per_column, Rng& rng) {
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(norms.size()));
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(rows));
  for (Eigen::Index l = 0; l < lambda.cols(); ++l) {
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    for (Eigen::Index t = 0; t < per_column; ++t) lambda(idx[static_cast<std::size_t>(t)], l) = rng.exponential(1.0);
    const double norm = lambda.col(l).norm();
    if (norm > 0.0) lambda.col(l) *= norms[static_cast<std::size_t>(l)] / norm;
  }
  return lambda;
}

inline std::vector<double> descending_norms() {
  std::vector<double> v;
  for (int l = 10; l >= 1; --l) v.push_back(l / 10.0);
  return v;
}

// z = Lambda eta + e, rows i.i.d.; also returns eta.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> sample_factor_rows(const FactorModel& m, Eigen::Index n, Rng& rng) {
  const Eigen::MatrixXd eta = standard_normal_matrix(n, m.k(), rng);
  Eigen::MatrixXd noise = standard_normal_matrix(n, m.dim(), rng);
  noise = noise * m.sigma_diag.cwiseSqrt().asDiagonal();
  return {eta * m.lambda.transpose() + noise, eta};
}

inline SimulatedData from_factor_model(const ScenarioSpec& spec, const FactorModel& truth, std::uint64_t seed) {
  SimulatedData out;
  out.spec = spec;
  out.model = truth;
  out.joint_cov = implied_covariance(truth);
  Rng train_rng = Rng(seed).fork(1);
  Rng test_rng = Rng(seed).fork(2);
  auto [train, eta] = sample_factor_rows(truth, spec.n_train, train_rng);
  const std::string tag = "scenario " + scenario_name(spec.scenario) + ", seed " + std::to_string(spec.seed);
  out.train = dataset_from_joint(train, tag + " (train)");
  out.train_factors = std::move(eta);
  out.test = dataset_from_joint(sample_factor_rows(truth, spec.n_test, test_rng).first, tag + " (test)");
  return out;
}

}  // namespace detail

/// p = 20, k = 10 sparse exponential loadings with column norms 1, 0.9, ..., 0.1;
/// the response loads only on the last (weakest) factor.
inline FactorModel scenario1_model(std::uint64_t seed) {
  Rng rng = Rng(seed).fork(0);
  FactorModel m;
  m.lambda = Eigen::MatrixXd::Zero(21, 10);
  m.lambda.topRows(20) = detail::sparse_exponential_loadings(20, detail::descending_norms(), 10, rng);
  m.lambda(20, 9) = 1.0;
  m.sigma_diag = Eigen::VectorXd::Constant(21, 0.2);
  return unit_variance(m);
}

/// As scenario 1, but the 10 nonzero rows per column are drawn from all 21 rows,
/// so the response row comes from the same mechanism.
inline FactorModel scenario2_model(std::uint64_t seed) {
  Rng rng = Rng(seed).fork(0);
  FactorModel m;
  m.lambda = detail::sparse_exponential_loadings(21, detail::descending_norms(), 10, rng);
  m.sigma_diag = Eigen::VectorXd::Constant(21, 0.2);
  return unit_variance(m);
}

inline SimulatedData scenario1(const ScenarioSpec& spec) {
  spec.validate();
  return detail::from_factor_model(spec, scenario1_model(spec.seed), spec.seed);
}

inline SimulatedData scenario2(const ScenarioSpec& spec) {
  spec.validate();
  return detail::from_factor_model(spec, scenario2_model(spec.seed), spec.seed);
}

inline SimulatedData motivating(const ScenarioSpec& spec) {
  spec.validate();
  return detail::from_factor_model(spec, motivating_model(), spec.seed);
}

struct SparseRegressionTruth {
  FactorModel x_model;  // unit-variance predictor model (p = 20 rows, no response row)
  Eigen::VectorXd beta;
  Eigen::MatrixXd joint_cov;
};

/// Predictors from a dense 8-factor model with Exponential(1) loadings and
/// idiosyncratic variance 0.01, standardized; 12 of 20 coefficients N(0, 1),
/// rescaled so Var(beta^T x) = 0.1 and residual variance 0.9.
inline SparseRegressionTruth scenario3_truth(std::uint64_t seed, Eigen::Index p = 20) {
  Rng rng = Rng(seed).fork(0);
  FactorModel raw;
  raw.lambda.resize(p, 8);
  for (Eigen::Index l = 0; l < 8; ++l)
    for (Eigen::Index j = 0; j < p; ++j) raw.lambda(j, l) = rng.exponential(1.0);
  raw.sigma_diag = Eigen::VectorXd::Constant(p, 0.01);
  SparseRegressionTruth t;
  t.x_model = unit_variance(raw);
  const Eigen::MatrixXd cx = implied_covariance(t.x_model);

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(p));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  t.beta = Eigen::VectorXd::Zero(p);
  for (int s = 0; s < 12; ++s) t.beta(idx[static_cast<std::size_t>(s)]) = rng.normal();
  t.beta *= std::sqrt(0.1 / t.beta.dot(cx * t.beta));

  t.joint_cov.resize(p + 1, p + 1);
  const Eigen::VectorXd cxy = cx * t.beta;
  t.joint_cov.topLeftCorner(p, p) = cx;
  t.joint_cov.col(p).head(p) = cxy;
  t.joint_cov.row(p).head(p) = cxy.transpose();
  t.joint_cov(p, p) = t.beta.dot(cxy) + 0.9;
  return t;
}

inline SimulatedData scenario3(const ScenarioSpec& spec) {
  spec.validate();
  const SparseRegressionTruth t = scenario3_truth(spec.seed);
  SimulatedData out;
  out.spec = spec;
  out.beta = t.beta;
  out.joint_cov = t.joint_cov;
  auto draw = [&](Eigen::Index n, Rng rng, const std::string& part) {
    const Eigen::MatrixXd x = detail::sample_factor_rows(t.x_model, n, rng).first;
    const Eigen::VectorXd y = x * t.beta + std::sqrt(0.9) * standard_normal_vector(n, rng);
    return make_dataset(x, y, "scenario 3, seed " + std::to_string(spec.seed) + " (" + part + ")");
  };
  out.train = draw(spec.n_train, Rng(spec.seed).fork(1), "train");
  out.test = draw(spec.n_test, Rng(spec.seed).fork(2), "test");
  return out;
}

/// 19 predictors built like scenario 3's, with an independent N(0, 1) response.
inline SimulatedData null_signal(const ScenarioSpec& spec) {
  spec.validate();
  const SparseRegressionTruth t = scenario3_truth(spec.seed, 19);
  SimulatedData out;
  out.spec = spec;
  out.beta = Eigen::VectorXd::Zero(t.beta.size());
  const Eigen::Index p = t.beta.size();
  out.joint_cov = Eigen::MatrixXd::Identity(p + 1, p + 1);
  out.joint_cov.topLeftCorner(p, p) = t.joint_cov.topLeftCorner(p, p);
  auto draw = [&](Eigen::Index n, Rng rng, const std::string& part) {
    const Eigen::MatrixXd x = detail::sample_factor_rows(t.x_model, n, rng).first;
    return make_dataset(x, standard_normal_vector(n, rng),
                        "null signal, seed " + std::to_string(spec.seed) + " (" + part + ")");
  };
  out.train = draw(spec.n_train, Rng(spec.seed).fork(1), "train");
  out.test = draw(spec.n_test, Rng(spec.seed).fork(2), "test");
  return out;
}

inline SimulatedData simulate(const ScenarioSpec& spec) {
  switch (spec.scenario) {
    case Scenario::One: return scenario1(spec);
    case Scenario::Two: return scenario2(spec);
    case Scenario::Three: return scenario3(spec);
    case Scenario::Motivating: return motivating(spec);
    case Scenario::Null: return null_signal(spec);
  }
  throw ConfigError("unknown scenario");
}

}  // namespace tebfar::sim

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "tebfar/gibbs.hpp"

using namespace tebfar;
using testing_support::gamma_logpdf;
using testing_support::moments;
using testing_support::random_model;

namespace {

MgpState flat_mgp(Eigen::Index rows, Eigen::Index k, double xi = 1.0, double delta = 1.0) {
  MgpState s;
  s.xi = Eigen::MatrixXd::Constant(rows, k, xi);
  s.delta = Eigen::VectorXd::Constant(k, delta);
  s.recompute_tau();
  return s;
}

MgpState random_mgp(Eigen::Index rows, Eigen::Index k, Rng& rng) {
  MgpState s;
  s.xi.resize(rows, k);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index l = 0; l < k; ++l) s.xi(i, l) = 0.5 + rng.uniform();
  s.delta.resize(k);
  for (Eigen::Index l = 0; l < k; ++l) s.delta(l) = 0.5 + rng.uniform();
  s.recompute_tau();
  return s;
}

double normal_logpdf(double x, double var) { return -0.5 * (kLog2Pi + std::log(var) + x * x / var); }

// max - min of (a - b) over a grid: zero when a and b differ by a constant.
double spread_of_difference(const std::vector<double>& a, const std::vector<double>& b) {
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < a.size(); ++i) {
    lo = std::min(lo, a[i] - b[i]);
    hi = std::max(hi, a[i] - b[i]);
  }
  return hi - lo;
}

}  // namespace

TEST(SamplerConfig, DefaultsAndTruncation) {
  SamplerConfig c;
  EXPECT_EQ(c.iterations, 5000);
  EXPECT_EQ(c.burn_in, 2500);
  EXPECT_EQ(c.thin, 5);
  EXPECT_EQ(c.retained(), 500);
  EXPECT_EQ(default_k_max(20), 11);  // floor(5 + 2 ln 21) = 11
  EXPECT_EQ(default_k_max(2), 3);    // capped at p + 1
  EXPECT_EQ(default_k_max(10), 9);
}

TEST(SamplerConfig, InvalidSettingsRejected) {
  SamplerConfig c;
  c.burn_in = c.iterations;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.thin = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.k_max = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.mode = SamplerMode::tebfar(0.0);
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(FactorUpdate, ZeroLoadingsGivePrior) {
  FactorModel m;
  m.lambda = Eigen::MatrixXd::Zero(3, 2);
  m.sigma_diag = Eigen::VectorXd::Ones(3);
  Rng rng(1);
  const Eigen::MatrixXd data = standard_normal_matrix(100000, 3, rng);
  const Eigen::MatrixXd eta = sample_factors(m, data, rng);
  EXPECT_LT(eta.colwise().mean().cwiseAbs().maxCoeff(), 0.02);
  const auto c = factor_conditional(m, data);
  EXPECT_LT((c.cov - Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-15);
}

TEST(FactorUpdate, HandComputedTwoByTwo) {
  FactorModel m;
  m.lambda = Eigen::Vector2d(1.0, 1.0);
  m.sigma_diag = Eigen::Vector2d(1.0, 0.5);
  Eigen::MatrixXd z(1, 2);
  z << 2.0, 0.0;
  const auto c = factor_conditional(m, z);
  // V = 1 / (1 + 1 + 2) and mean = V * (2 / 1 + 0 / 0.5)
  EXPECT_NEAR(c.cov(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(c.mean(0, 0), 0.5, 1e-15);
}

TEST(FactorUpdate, MatchesJointGaussianConditioning) {
  Rng rng(2);
  const FactorModel m = random_model(4, 2, rng);
  const Eigen::MatrixXd z = standard_normal_matrix(3, 5, rng);
  const auto c = factor_conditional(m, z);
  const Eigen::MatrixXd omega_inv = implied_covariance(m).inverse();
  const Eigen::MatrixXd oracle_cov = Eigen::MatrixXd::Identity(2, 2) - m.lambda.transpose() * omega_inv * m.lambda;
  const Eigen::MatrixXd oracle_mean = (m.lambda.transpose() * omega_inv * z.transpose()).transpose();
  EXPECT_LT((c.cov - oracle_cov).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((c.mean - oracle_mean).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FactorUpdate, DrawsReproduceConditionalMoments) {
  Rng rng(3);
  const FactorModel m = random_model(4, 2, rng);
  Eigen::MatrixXd z(1, 5);
  z << 0.3, -1.0, 0.8, 0.1, 1.2;
  const auto c = factor_conditional(m, z);
  const int n = 100000;
  const Eigen::MatrixXd rows = z.replicate(n, 1);
  const Eigen::MatrixXd eta = sample_factors(m, rows, rng);
  for (Eigen::Index l = 0; l < 2; ++l) {
    std::vector<double> v(eta.col(l).data(), eta.col(l).data() + n);
    const auto mo = moments(v);
    EXPECT_NEAR(mo.mean, c.mean(0, l), 3.0 * mo.se_mean());
    EXPECT_NEAR(mo.var, c.cov(l, l), 3.0 * c.cov(l, l) * std::sqrt(2.0 / n));
  }
}

TEST(LoadingUpdate, EmptyDataGivesPrior) {
  Rng rng(4);
  const FactorModel m = random_model(3, 3, rng);
  const MgpState s = random_mgp(4, 3, rng);
  const auto c = loading_row_conditional(m, s, Eigen::MatrixXd(0, 3), Eigen::MatrixXd(0, 4), 1);
  const Eigen::VectorXd prior_var = s.xi.row(1).transpose().cwiseProduct(s.tau).cwiseInverse();
  EXPECT_LT((c.cov - Eigen::MatrixXd(prior_var.asDiagonal())).norm(), 1e-12);
  EXPECT_LT(c.mean.norm(), 1e-15);
}

TEST(LoadingUpdate, InfiniteShrinkageGivesZeroRow) {
  Rng rng(5);
  const FactorModel m = random_model(3, 2, rng);
  const MgpState s = flat_mgp(4, 2, 1e12, 1.0);
  const Eigen::MatrixXd eta = standard_normal_matrix(50, 2, rng);
  const Eigen::MatrixXd data = standard_normal_matrix(50, 4, rng);
  const Eigen::MatrixXd lam = sample_loadings(m, s, eta, data, rng);
  EXPECT_LT(lam.cwiseAbs().maxCoeff(), 1e-4);
}

TEST(LoadingUpdate, MatchesBayesianRegressionOracle) {
  Rng rng(6);
  const FactorModel m = random_model(3, 3, rng);
  const MgpState s = random_mgp(4, 3, rng);
  const Eigen::MatrixXd eta = standard_normal_matrix(20, 3, rng);
  const Eigen::MatrixXd data = standard_normal_matrix(20, 4, rng);
  for (Eigen::Index j = 0; j < 4; ++j) {
    const auto c = loading_row_conditional(m, s, eta, data, j);
    const double s2 = m.sigma_diag(j);
    Eigen::MatrixXd prior = Eigen::MatrixXd::Zero(3, 3);
    for (int l = 0; l < 3; ++l) prior(l, l) = s.xi(j, l) * s.tau(l);
    const Eigen::MatrixXd w = (prior + eta.transpose() * eta / s2).inverse();
    EXPECT_LT((c.cov - w).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((c.mean - w * eta.transpose() * data.col(j) / s2).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(LoadingUpdate, DrawsReproduceConditionalMoments) {
  Rng rng(7);
  const FactorModel m = random_model(2, 2, rng);
  const MgpState s = random_mgp(3, 2, rng);
  const Eigen::MatrixXd eta = standard_normal_matrix(10, 2, rng);
  const Eigen::MatrixXd data = standard_normal_matrix(10, 3, rng);
  const auto c = loading_row_conditional(m, s, eta, data, 2);
  const int n = 100000;
  std::vector<double> first(n), second(n);
  for (int t = 0; t < n; ++t) {
    const Eigen::MatrixXd lam = sample_loadings(m, s, eta, data, rng);
    first[static_cast<std::size_t>(t)] = lam(2, 0);
    second[static_cast<std::size_t>(t)] = lam(2, 1);
  }
  const auto a = moments(first), b = moments(second);
  EXPECT_NEAR(a.mean, c.mean(0), 3.0 * a.se_mean());
  EXPECT_NEAR(b.mean, c.mean(1), 3.0 * b.se_mean());
  EXPECT_NEAR(a.var, c.cov(0, 0), 3.0 * c.cov(0, 0) * std::sqrt(2.0 / n));
  EXPECT_NEAR(b.var, c.cov(1, 1), 3.0 * c.cov(1, 1) * std::sqrt(2.0 / n));
}

TEST(IdiosyncraticUpdate, FixedResponseEntryUntouched) {
  Rng rng(8);
  FactorModel m = random_model(3, 2, rng);
  m.y_variance_fixed = true;
  m.sigma_diag(3) = 0.5;
  const Eigen::MatrixXd eta = standard_normal_matrix(30, 2, rng);
  const Eigen::MatrixXd data = standard_normal_matrix(30, 4, rng);
  for (int t = 0; t < 1000; ++t) {
    const Eigen::VectorXd s = sample_idiosyncratic(m, eta, data, MgpHyperparams{}, rng);
    ASSERT_EQ(s(3), 0.5);
  }
}

TEST(IdiosyncraticUpdate, ZeroResidualsLeavePriorRate) {
  // n = 2 rows reproduced exactly by the factors: sigma^2 ~ InvGamma(2, 0.3),
  // so its precision has mean 2 / 0.3.
  FactorModel m;
  m.lambda = Eigen::MatrixXd::Ones(2, 1);
  m.sigma_diag = Eigen::VectorXd::Ones(2);
  Eigen::MatrixXd eta(2, 1);
  eta << 0.5, -1.5;
  const Eigen::MatrixXd data = eta * m.lambda.transpose();
  Rng rng(9);
  std::vector<double> prec(100000);
  for (auto& v : prec) v = 1.0 / sample_idiosyncratic(m, eta, data, MgpHyperparams{}, rng)(0);
  EXPECT_NEAR(moments(prec).mean, 2.0 / 0.3, 0.01 * 2.0 / 0.3);
}

TEST(IdiosyncraticUpdate, MeanMatchesInverseGammaMoment) {
  Rng rng(10);
  const FactorModel m = random_model(2, 1, rng);
  const Eigen::MatrixXd eta = standard_normal_matrix(40, 1, rng);
  const Eigen::MatrixXd data = standard_normal_matrix(40, 3, rng);
  const double ssr = (data.col(1) - eta * m.lambda(1, 0)).squaredNorm();
  const double shape = 1.0 + 20.0, rate = 0.3 + 0.5 * ssr;
  std::vector<double> v(100000);
  for (auto& x : v) x = sample_idiosyncratic(m, eta, data, MgpHyperparams{}, rng)(1);
  EXPECT_NEAR(moments(v).mean, rate / (shape - 1.0), 0.01 * rate / (shape - 1.0));
}

TEST(LocalPrecisionUpdate, ConditionalMeans) {
  FactorModel m;
  m.lambda = Eigen::MatrixXd::Zero(2, 1);
  m.lambda(1, 0) = std::sqrt(3.0);  // tau * lambda^2 = 3
  m.sigma_diag = Eigen::VectorXd::Ones(2);
  const MgpState s = flat_mgp(2, 1);
  Rng rng(11);
  std::vector<double> zero(100000), three(100000);
  for (std::size_t t = 0; t < zero.size(); ++t) {
    const Eigen::MatrixXd xi = sample_local_precisions(m, s, MgpHyperparams{}, rng);
    zero[t] = xi(0, 0);
    three[t] = xi(1, 0);
  }
  EXPECT_NEAR(moments(zero).mean, 2.0 / 1.5, 0.01 * 2.0 / 1.5);  // Gamma(2, 1.5)
  EXPECT_NEAR(moments(three).mean, 2.0 / 3.0, 0.01 * 2.0 / 3.0);  // Gamma(2, 3)
}

TEST(LocalPrecisionUpdate, ConditionalDensityMatchesPriorTimesLikelihood) {
  const MgpHyperparams h;
  const double lambda = 0.7, tau = 2.5;
  std::vector<double> grid, posterior, conditional;
  for (int i = 1; i <= 2000; ++i) grid.push_back(0.005 * i);
  for (double xi : grid) {
    posterior.push_back(gamma_logpdf(xi, h.xi_shape, h.xi_rate) + normal_logpdf(lambda, 1.0 / (xi * tau)));
    conditional.push_back(gamma_logpdf(xi, h.xi_shape + 0.5, h.xi_rate + 0.5 * tau * lambda * lambda));
  }
  EXPECT_LT(spread_of_difference(posterior, conditional), 1e-8);
  const auto a = testing_support::normalized_grid_density([&](double x) { return posterior[0] * 0 + gamma_logpdf(x, h.xi_shape, h.xi_rate) + normal_logpdf(lambda, 1.0 / (x * tau)); }, grid);
  const auto b = testing_support::normalized_grid_density([&](double x) { return gamma_logpdf(x, h.xi_shape + 0.5, h.xi_rate + 0.5 * tau * lambda * lambda); }, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-8);
}

TEST(ColumnMultiplierUpdate, ZeroLoadingsCountDimensionsOnly) {
  FactorModel m;
  m.lambda = Eigen::MatrixXd::Zero(10, 1);
  m.sigma_diag = Eigen::VectorXd::Ones(10);
  const auto [shape, rate] = column_multiplier_conditional(m, flat_mgp(10, 1), MgpHyperparams{}, 0);
  EXPECT_DOUBLE_EQ(shape, 2.1 + 5.0);
  EXPECT_DOUBLE_EQ(rate, 1.0);
}

TEST(ColumnMultiplierUpdate, ConditionalMatchesQuadratureForEveryColumn) {
  Rng rng(12);
  const MgpHyperparams h;
  const FactorModel m = random_model(4, 3, rng);
  const MgpState s = random_mgp(5, 3, rng);
  std::vector<double> grid;
  for (int i = 1; i <= 3000; ++i) grid.push_back(0.004 * i);
  for (Eigen::Index target = 0; target < 3; ++target) {
    const auto [shape, rate] = column_multiplier_conditional(m, s, h, target);
    std::vector<double> posterior, conditional;
    for (double dv : grid) {
      MgpState t = s;
      t.delta(target) = dv;
      t.recompute_tau();
      double lp = gamma_logpdf(dv, target == 0 ? h.a1 : h.a_rest, 1.0);
      for (Eigen::Index l = 0; l < 3; ++l)
        for (Eigen::Index j = 0; j < 5; ++j) lp += normal_logpdf(m.lambda(j, l), 1.0 / (t.xi(j, l) * t.tau(l)));
      posterior.push_back(lp);
      conditional.push_back(gamma_logpdf(dv, shape, rate));
    }
    EXPECT_LT(spread_of_difference(posterior, conditional), 1e-8) << "column " << target;
  }
}

TEST(ColumnMultiplierUpdate, TauStaysCumulativeProduct) {
  Rng rng(13);
  const FactorModel m = random_model(5, 4, rng);
  MgpState s = random_mgp(6, 4, rng);
  for (int sweep = 0; sweep < 100; ++sweep) {
    s = sample_column_multipliers(m, s, MgpHyperparams{}, rng);
    double running = 1.0;
    for (Eigen::Index l = 0; l < 4; ++l) {
      running *= s.delta(l);
      ASSERT_NEAR(s.tau(l), running, 1e-12 * running);
    }
  }
}

namespace {

Eigen::MatrixXd simulate_joint(const FactorModel& m, Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  return mvn_sample_rows(n, implied_covariance(m), rng);
}

FactorModel recovery_truth(Rng& rng) {
  FactorModel m;
  m.lambda = standard_normal_matrix(11, 3, rng);
  m.sigma_diag = Eigen::VectorXd::Constant(11, 0.5);
  return m;
}

}  // namespace

TEST(RunChain, FixedVarianceIdenticalInEveryDraw) {
  Rng rng(14);
  const Eigen::MatrixXd data = simulate_joint(random_model(5, 2, rng), 200, 15);
  SamplerConfig c;
  c.iterations = 1000;
  c.burn_in = 400;
  c.thin = 3;
  c.mode = SamplerMode::tebfar(0.5);
  const PosteriorDraws d = run_chain(data, c);
  EXPECT_EQ(d.size(), static_cast<std::size_t>(c.retained()));
  EXPECT_EQ(d.size(), 200u);
  for (const auto& draw : d.draws) ASSERT_EQ(draw.model.sigma_y2(), 0.5);
}

TEST(RunChain, SameSeedSameDraws) {
  Rng rng(16);
  const Eigen::MatrixXd data = simulate_joint(random_model(4, 2, rng), 100, 17);
  SamplerConfig c;
  c.iterations = 200;
  c.burn_in = 100;
  c.thin = 1;
  c.seed = 99;
  const auto a = run_chain(data, c), b = run_chain(data, c);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    ASSERT_EQ(a.draws[t].model.lambda, b.draws[t].model.lambda);
    ASSERT_EQ(a.draws[t].model.sigma_diag, b.draws[t].model.sigma_diag);
  }
  c.seed = 100;
  EXPECT_NE(run_chain(data, c).draws.back().model.lambda, a.draws.back().model.lambda);
}

TEST(RunChain, JbfmSamplesResponseVariance) {
  Rng rng(18);
  const Eigen::MatrixXd data = simulate_joint(random_model(4, 2, rng), 150, 19);
  SamplerConfig c;
  c.iterations = 400;
  c.burn_in = 200;
  c.thin = 2;
  const auto d = run_chain(data, c);
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& draw : d.draws) {
    lo = std::min(lo, draw.model.sigma_y2());
    hi = std::max(hi, draw.model.sigma_y2());
  }
  EXPECT_GT(hi - lo, 0.0);
}

TEST(RunChain, RejectsNonFiniteData) {
  Eigen::MatrixXd data = Eigen::MatrixXd::Ones(5, 3);
  data(2, 1) = NAN;
  EXPECT_THROW(run_chain(data, SamplerConfig{}), InvalidInput);
}

TEST(RunChain, RecoversJointCovariance) {
  Rng rng(20);
  const FactorModel truth = recovery_truth(rng);
  const Eigen::MatrixXd data = simulate_joint(truth, 2000, 21);
  SamplerConfig c;
  c.iterations = 3000;
  c.burn_in = 1500;
  c.k_max = 6;
  c.seed = 22;
  const Eigen::MatrixXd est = run_chain(data, c).mean_implied_covariance();
  const Eigen::MatrixXd cov = implied_covariance(truth);
  EXPECT_LE((est - cov).norm() / cov.norm(), 0.15);
}

TEST(RunChain, StartAtTruthStaysInPriorStartBand) {
  Rng rng(23);
  FactorModel truth;
  truth.lambda = standard_normal_matrix(7, 2, rng);
  truth.sigma_diag = Eigen::VectorXd::Constant(7, 0.4);
  const Eigen::MatrixXd data = simulate_joint(truth, 300, 24);
  SamplerConfig c;
  c.iterations = 500;
  c.burn_in = 0;
  c.thin = 1;
  c.k_max = 4;
  double lo = INFINITY, hi = -INFINITY;
  for (std::uint64_t s = 0; s < 20; ++s) {
    c.seed = 1000 + s;
    GibbsChain chain(data, c);
    for (int it = 0; it < 500; ++it) chain.sweep();
    const double ll = loglik_split(chain.model(), data).joint;
    lo = std::min(lo, ll);
    hi = std::max(hi, ll);
  }
  c.seed = 5;
  GibbsChain chain(data, c);
  FactorModel start = truth;
  start.lambda.conservativeResize(7, 4);
  start.lambda.rightCols(2).setZero();
  chain.set_model(start);
  for (int it = 0; it < 500; ++it) chain.sweep();
  const double ll = loglik_split(chain.model(), data).joint;
  EXPECT_GE(ll, lo);
  EXPECT_LE(ll, hi);
}

TEST(RunChain, PredictorOrderOnlyPermutesSummaries) {
  Rng rng(25);
  const FactorModel truth = random_model(4, 2, rng);
  const Eigen::MatrixXd data = simulate_joint(truth, 400, 26);
  Eigen::MatrixXd swapped = data;
  swapped.col(0).swap(swapped.col(2));
  SamplerConfig c;
  c.iterations = 3000;
  c.burn_in = 1000;
  c.thin = 2;
  c.k_max = 3;
  c.seed = 1;
  const Eigen::MatrixXd a = run_chain(data, c).mean_implied_covariance();
  c.seed = 2;
  const Eigen::MatrixXd a2 = run_chain(data, c).mean_implied_covariance();
  const Eigen::MatrixXd b = run_chain(swapped, c).mean_implied_covariance();
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 2, 1, 0, 3, 4;
  const Eigen::MatrixXd b_back = perm * b * perm.transpose();
  const double mc_error = (a - a2).cwiseAbs().maxCoeff();
  EXPECT_LE((a - b_back).cwiseAbs().maxCoeff(), 2.0 * mc_error + 1e-3);
}

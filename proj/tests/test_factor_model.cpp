#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "tebfar/factor_model.hpp"
#include "tebfar/serialize.hpp"
#include "tebfar/simgen.hpp"

using namespace tebfar;
using testing_support::random_model;

TEST(ImpliedCovariance, ZeroLoadingsGiveDiagonal) {
  FactorModel m;
  m.lambda = Eigen::MatrixXd::Zero(4, 2);
  m.sigma_diag = Eigen::Vector4d(0.5, 1.0, 2.0, 3.0);
  EXPECT_EQ(implied_covariance(m), Eigen::MatrixXd(m.sigma_diag.asDiagonal()));
}

TEST(ImpliedCovariance, MotivatingModelResponseVariance) {
  const FactorModel m = sim::motivating_model();
  const Eigen::MatrixXd c = implied_covariance(m);
  EXPECT_NEAR(c(9, 9), 1.2, 1e-14);
  for (Eigen::Index j = 0; j < 10; ++j) EXPECT_NEAR(c(j, j), 0.2 + m.lambda.row(j).squaredNorm(), 1e-14);
  EXPECT_NO_THROW(cholesky(c));
}

TEST(ImpliedCovariance, MatchesDirectProduct) {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const FactorModel m = random_model(6, 3, rng);
    Eigen::MatrixXd oracle(7, 7);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j) {
        double s = i == j ? m.sigma_diag(i) : 0.0;
        for (int l = 0; l < 3; ++l) s += m.lambda(i, l) * m.lambda(j, l);
        oracle(i, j) = s;
      }
    EXPECT_LT((implied_covariance(m) - oracle).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(InducedRegression, DecoupledResponse) {
  Rng rng(2);
  FactorModel m = random_model(4, 2, rng);
  m.lambda.row(4).setZero();
  const auto r = induced_regression(m);
  EXPECT_LT(r.beta.norm(), 1e-14);
  EXPECT_NEAR(r.sigma2, m.sigma_y2(), 1e-14);
}

TEST(InducedRegression, SingleFactorHandCase) {
  FactorModel m;
  m.lambda = Eigen::Vector3d(1, 1, 1);
  m.sigma_diag = Eigen::Vector3d(1, 1, 0.2);
  for (const auto& r : {induced_regression(m), induced_regression_single_factor(m)}) {
    EXPECT_NEAR(r.beta(0), 1.0 / 3.0, 1e-14);
    EXPECT_NEAR(r.beta(1), 1.0 / 3.0, 1e-14);
    EXPECT_NEAR(r.sigma2, 0.2 + 1.0 / 3.0, 1e-14);
  }
}

TEST(InducedRegression, RandomModelsAgreeWithOracles) {
  Rng rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index k = 1 + rep % 5;
    const Eigen::Index p = 2 + (rep * 7) % 29;
    const FactorModel m = random_model(p, k, rng);
    const auto r = induced_regression(m);
    const auto [beta, sigma2] = testing_support::brute_force_regression(implied_covariance(m));
    EXPECT_LT((r.beta - beta).cwiseAbs().maxCoeff(), 1e-10) << "p=" << p << " k=" << k;
    EXPECT_NEAR(r.sigma2, sigma2, 1e-10);
    if (k == 1) {
      const auto c = induced_regression_single_factor(m);
      EXPECT_LT((r.beta - c.beta).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_NEAR(r.sigma2, c.sigma2, 1e-12);
    }
  }
}

TEST(InducedRegression, ResidualVarianceAtLeastIdiosyncratic) {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const FactorModel m = random_model(5, 1 + rep % 4, rng);
    EXPECT_GE(induced_regression(m).sigma2, m.sigma_y2() - 1e-12);
  }
}

TEST(InducedRegression, InvariantToSignFlipAndRotation) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const FactorModel m = random_model(7, 4, rng);
    const auto base = induced_regression(m);
    FactorModel flipped = m;
    flipped.lambda.col(rep % 4) *= -1.0;
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(standard_normal_matrix(4, 4, rng));
    FactorModel rotated = m;
    rotated.lambda = m.lambda * Eigen::MatrixXd(qr.householderQ());
    for (const auto& other : {flipped, rotated}) {
      const auto r = induced_regression(other);
      EXPECT_LT((r.beta - base.beta).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_NEAR(r.sigma2, base.sigma2, 1e-10);
    }
  }
}

TEST(InducedRegression, SingleFactorVarianceShrinksWithLoadingSize) {
  FactorModel m;
  m.lambda = Eigen::Vector4d(0.5, -0.3, 0.8, 1.0);
  m.sigma_diag = Eigen::Vector4d(0.4, 0.7, 0.3, 0.2);
  double previous = induced_regression_single_factor(m).sigma2;
  for (int step = 1; step <= 20; ++step) {
    m.lambda(1, 0) = -0.3 - 0.2 * step;
    const double s = induced_regression_single_factor(m).sigma2;
    EXPECT_LT(s, previous);
    previous = s;
  }
}

TEST(LoglikSplit, EmptyData) {
  Rng rng(6);
  const auto s = loglik_split(random_model(3, 2, rng), Eigen::MatrixXd(0, 4));
  EXPECT_EQ(s.joint, 0.0);
  EXPECT_EQ(s.x_marginal, 0.0);
  EXPECT_EQ(s.y_given_x, 0.0);
}

TEST(LoglikSplit, SingleZeroRowUnderIdentity) {
  FactorModel m;
  m.lambda = Eigen::MatrixXd::Zero(4, 1);
  m.sigma_diag = Eigen::VectorXd::Ones(4);
  EXPECT_NEAR(loglik_split(m, Eigen::MatrixXd::Zero(1, 4)).joint, -2.0 * kLog2Pi, 1e-14);
}

TEST(LoglikSplit, DecompositionIdentity) {
  Rng rng(7);
  const FactorModel m = random_model(8, 3, rng);
  const Eigen::MatrixXd data = mvn_sample_rows(1000, implied_covariance(m), rng);
  const auto s = loglik_split(m, data);
  EXPECT_NEAR(s.joint, s.x_marginal + s.y_given_x, 1e-8 * 1000);
}

TEST(MgpState, TauIsCumulativeProduct) {
  MgpState s;
  s.delta = Eigen::Vector3d(2.0, 3.0, 0.5);
  s.recompute_tau();
  EXPECT_DOUBLE_EQ(s.tau(0), 2.0);
  EXPECT_DOUBLE_EQ(s.tau(1), 6.0);
  EXPECT_DOUBLE_EQ(s.tau(2), 3.0);
}

TEST(MgpHyperparams, RejectsNonPositive) {
  MgpHyperparams h;
  EXPECT_NO_THROW(h.validate());
  h.xi_rate = 0.0;
  EXPECT_THROW(h.validate(), ConfigError);
}

TEST(FactorModelJson, RoundTripWithShrinkageState) {
  Rng rng(8);
  FactorModel m = random_model(3, 2, rng);
  m.y_variance_fixed = true;
  MgpState s;
  s.xi = Eigen::MatrixXd::Constant(4, 2, 1.5);
  s.delta = Eigen::Vector2d(2.1, 3.1);
  s.recompute_tau();
  const Json j = model_to_json(m, s);
  for (const char* key : {"p", "k", "lambda", "sigma_diag", "y_variance_fixed", "xi", "delta"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["lambda"].size(), 4u);
  EXPECT_EQ(j["lambda"][0].size(), 2u);
  const FactorModel back = model_from_json(Json::parse(j.dump()));
  EXPECT_EQ(back.lambda, m.lambda);
  EXPECT_EQ(back.sigma_diag, m.sigma_diag);
  EXPECT_TRUE(back.y_variance_fixed);
  const auto s2 = mgp_from_json(j);
  ASSERT_TRUE(s2.has_value());
  EXPECT_EQ(s2->tau, s.tau);
}

TEST(FactorModelJson, MalformedDocumentRejected) {
  Json j = {{"p", 2}, {"k", 1}, {"lambda", {{1.0}, {2.0}}}, {"sigma_diag", {1.0, 1.0, 1.0}}};
  EXPECT_THROW(model_from_json(j), InvalidInput);
}

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "fixtures.hpp"
#include "mftp/fpca.hpp"
#include "mftp/outcome.hpp"
#include "mftp/simgen.hpp"

using namespace mftp;

namespace {

ErrorCategory category_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.category();
  }
  return ErrorCategory::internal;
}

struct Fixture {
  std::shared_ptr<const FpcaModel> basis;
  Eigen::MatrixXd scores;
  Dataset data;
};

// Curves from a GP; Y = 2 A_1 + X_1 + N(0, 0.01^2) on the fitted basis.
Fixture recovery_data(std::size_t n, std::uint64_t seed) {
  const auto grid = TimeGrid::uniform(60);
  auto curves = sim::sample_gp(sim::Kernel::squared_exponential(0.1), grid, n, seed);
  auto basis = std::make_shared<const FpcaModel>(fit_fpca(grid, curves, KRule::fixed(4)));
  const Eigen::MatrixXd s = project_scores(*basis, curves).scores;
  auto rng = make_rng(seed + 1);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    x(i, 0) = z(rng);
    x(i, 1) = z(rng);
    y(i) = 2.0 * s(i, 0) + x(i, 0) + 0.01 * z(rng);
  }
  return {basis, s, Dataset(grid, std::move(curves), std::move(x), std::move(y), OutcomeKind::continuous)};
}

}  // namespace

TEST(FitOutcome, RecoversGenerativeCoefficients) {
  const auto f = recovery_data(2000, 21);
  OutcomeOptions opt;
  opt.components = 4;
  opt.lambda = LambdaRule::fixed(1e-8);
  const OutcomeModel m = fit_outcome(f.data, f.basis, opt);
  const auto& b = m.coefficients();
  ASSERT_EQ(b.size(), 1 + 4 + 2);
  EXPECT_NEAR(b(1), 2.0, 0.05);
  EXPECT_NEAR(b(5), 1.0, 0.05);
  for (int j : {2, 3, 4, 6}) EXPECT_NEAR(b(j), 0.0, 0.05);
  EXPECT_NEAR(b(0), 0.0, 0.05);
  EXPECT_GT(m.r_squared, 0.99);
}

TEST(FitOutcome, ConstantOutcomeGivesInterceptOnly) {
  const auto f = recovery_data(200, 3);
  const Dataset d(f.data.grid(), f.data.curves(), f.data.covariates(), Eigen::VectorXd::Constant(200, 4.25),
                  OutcomeKind::continuous);
  OutcomeOptions opt;
  opt.lambda = LambdaRule::fixed(0.5);
  const OutcomeModel m = fit_outcome(d, f.basis, opt);
  EXPECT_NEAR(m.intercept(), 4.25, 1e-12);
  EXPECT_LT(m.coefficients().tail(m.coefficients().size() - 1).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FitOutcome, GcvIsReproducible) {
  const auto f = recovery_data(300, 4);
  const OutcomeModel a = fit_outcome(f.data, f.basis);
  const OutcomeModel b = fit_outcome(f.data, f.basis);
  EXPECT_EQ(a.lambda(), b.lambda());
  EXPECT_EQ(a.coefficients(), b.coefficients());
  EXPECT_GT(a.lambda(), 0.0);
}

TEST(FitOutcome, WarnsWhenUnderdetermined) {
  const auto f = recovery_data(6, 5);
  OutcomeOptions opt;
  opt.components = 4;
  opt.lambda = LambdaRule::fixed(1.0);
  const OutcomeModel m = fit_outcome(f.data, f.basis, opt);
  EXPECT_FALSE(m.warnings.empty());
}

TEST(FitOutcome, LogitRequiresBinaryOutcome) {
  const auto f = recovery_data(100, 6);
  OutcomeOptions opt;
  opt.link = Link::logit;
  EXPECT_EQ(category_of([&] { fit_outcome(f.data, f.basis, opt); }), ErrorCategory::config);
}

TEST(FitOutcome, LogitOnBinaryOutcome) {
  const auto f = recovery_data(1500, 7);
  auto rng = make_rng(70);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd y(1500);
  for (Eigen::Index i = 0; i < 1500; ++i) y(i) = u(rng) < glm::logistic_fn(-0.5 + 1.0 * f.scores(i, 0)) ? 1.0 : 0.0;
  const Dataset d(f.data.grid(), f.data.curves(), f.data.covariates(), y, OutcomeKind::binary);
  OutcomeOptions opt;
  opt.components = 4;
  const OutcomeModel m = fit_outcome(d, f.basis, opt);
  EXPECT_EQ(m.link(), Link::logit);
  EXPECT_NEAR(m.coefficients()(1), 1.0, 0.2);
  EXPECT_NEAR(m.intercept(), -0.5, 0.2);
}

TEST(FitOutcome, SeparatedLogitWithoutPenaltyIsFitError) {
  const auto f = recovery_data(200, 8);
  Eigen::VectorXd y(200);
  for (Eigen::Index i = 0; i < 200; ++i) y(i) = f.scores(i, 0) > 0.0 ? 1.0 : 0.0;
  const Dataset d(f.data.grid(), f.data.curves(), f.data.covariates(), y, OutcomeKind::binary);
  OutcomeOptions opt;
  opt.components = 2;
  opt.lambda = LambdaRule::fixed(0.0);
  try {
    fit_outcome(d, f.basis, opt);
    FAIL() << "expected IRLS to fail on separated data";
  } catch (const Error& e) {
    EXPECT_TRUE(e.category() == ErrorCategory::fit || e.category() == ErrorCategory::numeric);
  }
}

TEST(PredictM, MeanCurveGivesIntercept) {
  const auto f = recovery_data(300, 9);
  const OutcomeModel m = fit_outcome(f.data, f.basis);
  const Eigen::VectorXd mean = f.basis->mean();
  const std::vector<double> x0(2, 0.0);
  EXPECT_NEAR(predict_m(m, x0, {mean.data(), 60}), m.intercept(), 1e-12);
  EXPECT_EQ(m.response(0.0), 0.0);
  const OutcomeModel logit(f.basis, 2, Eigen::VectorXd::Zero(5), Link::logit, 1.0);
  EXPECT_DOUBLE_EQ(logit.response(0.0), 0.5);
  EXPECT_DOUBLE_EQ(predict_m(logit, x0, {mean.data(), 60}), 0.5);
}

TEST(PredictM, UnitScoreStepGivesCoefficient) {
  const auto f = recovery_data(300, 10);
  const OutcomeModel m = fit_outcome(f.data, f.basis);
  const Eigen::VectorXd a0 = f.basis->mean();
  const Eigen::VectorXd a1 = a0 + std::sqrt(f.basis->eigenvalues()(0)) * f.basis->eigenfunctions().col(0);
  const std::vector<double> x = {0.3, -1.0};
  EXPECT_NEAR(predict_m(m, x, {a1.data(), 60}) - predict_m(m, x, {a0.data(), 60}), m.coefficients()(1), 1e-10);
}

TEST(PredictM, AffineAndLipschitzInCurve) {
  const auto f = recovery_data(300, 11);
  const OutcomeModel m = fit_outcome(f.data, f.basis);
  const double L = lipschitz_constant(m);
  const auto& grid = f.data.grid();
  auto rng = make_rng(5);
  std::normal_distribution<double> z(0.0, 1.0);
  const std::vector<double> x = {0.1, 0.2};
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> a(60), b(60), delta(60), ad(60), bd(60);
    for (std::size_t j = 0; j < 60; ++j) {
      a[j] = z(rng);
      b[j] = z(rng);
      delta[j] = 0.3 * z(rng);
      ad[j] = a[j] + delta[j];
      bd[j] = b[j] + delta[j];
    }
    EXPECT_NEAR(predict_m(m, x, ad) - predict_m(m, x, a), predict_m(m, x, bd) - predict_m(m, x, b), 1e-10);
    EXPECT_LE(std::abs(predict_m(m, x, a) - predict_m(m, x, b)), L * l2_distance(a, b, grid) + 1e-12);
  }
}

TEST(PredictM, BatchMatchesCurvePrediction) {
  const auto f = recovery_data(50, 12);
  const OutcomeModel m = fit_outcome(f.data, f.basis);
  const Eigen::VectorXd batch = predict_from_scores(m, f.scores, f.data.covariates());
  for (std::size_t i = 0; i < 50; ++i) {
    const auto s = f.data.sample(i);
    EXPECT_NEAR(batch(static_cast<Eigen::Index>(i)), predict_m(m, s.covariates, s.values), 1e-10);
  }
  const std::vector<double> bad_x(3, 0.0);
  EXPECT_EQ(category_of([&] { predict_m(m, bad_x, f.data.curve(0)); }), ErrorCategory::dimension);
}

TEST(FitOutcome, SimpleScenarioFitsWell) {
  const auto cfg = sim::scenario_config(1);
  const auto s = sim::generate(cfg, 3);
  auto basis = std::make_shared<const FpcaModel>(fit_fpca(s.data));
  const OutcomeModel m = fit_outcome(s.data, basis);
  // Noise variance 1 caps R^2; the signal is mostly the covariate block.
  const double signal = (s.mu_observed.array() - s.mu_observed.mean()).square().mean();
  EXPECT_GT(m.r_squared, 0.8 * signal / (signal + 1.0));
}

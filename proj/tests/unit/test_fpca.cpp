#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "fixtures.hpp"
#include "mftp/fpca.hpp"
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

Eigen::MatrixXd gram(const FpcaModel& m) {
  const auto& psi = m.eigenfunctions();
  Eigen::MatrixXd g(psi.cols(), psi.cols());
  for (Eigen::Index a = 0; a < psi.cols(); ++a) {
    for (Eigen::Index b = 0; b < psi.cols(); ++b) {
      const Eigen::VectorXd pa = psi.col(a), pb = psi.col(b);
      g(a, b) = inner_product({pa.data(), static_cast<std::size_t>(pa.size())},
                              {pb.data(), static_cast<std::size_t>(pb.size())}, m.grid());
    }
  }
  return g;
}

const FpcaModel& se_model() {
  static const FpcaModel model = [] {
    const auto grid = TimeGrid::uniform(100);
    const auto curves = sim::sample_gp(sim::Kernel::squared_exponential(0.05), grid, 2000, 11);
    return fit_fpca(grid, curves, KRule::variance_fraction(0.95));
  }();
  return model;
}

const FpcaModel& wiener_model() {
  static const FpcaModel model = [] {
    const auto grid = TimeGrid::uniform(200);
    const auto curves = sim::sample_gp(sim::Kernel::wiener(), grid, 4000, 12);
    return fit_fpca(grid, curves, KRule::variance_fraction(0.95));
  }();
  return model;
}

}  // namespace

TEST(FitFpca, RecoversRankTwoSpectrum) {
  const auto grid = TimeGrid::uniform(101);
  const auto curves = fixtures::rank2_curves(2000, 5, grid);
  const FpcaModel m = fit_fpca(grid, curves);
  ASSERT_GE(m.J(), 2u);
  EXPECT_NEAR(m.eigenvalues()(0), 4.0, 0.4);
  EXPECT_NEAR(m.eigenvalues()(1), 1.0, 0.1);
  if (m.J() > 2) EXPECT_LT(m.eigenvalues()(2), 1e-8 * m.eigenvalues()(0) + 1e-10);
  EXPECT_EQ(m.K(), 2u);
}

TEST(FitFpca, IdenticalCurvesHaveNoSpectrum) {
  const auto grid = TimeGrid::uniform(20);
  CurveMatrix c(5, 20);
  for (Eigen::Index j = 0; j < 20; ++j) c.col(j).setConstant(std::sin(0.3 * static_cast<double>(j)));
  const FpcaModel m = fit_fpca(grid, c);
  EXPECT_EQ(m.J(), 0u);
  EXPECT_EQ(m.K(), 0u);
  EXPECT_EQ(m.total_variance(), 0.0);
  for (Eigen::Index j = 0; j < 20; ++j) EXPECT_NEAR(m.mean()(j), c(0, j), 1e-14);
}

TEST(FitFpca, FixedRuleAndErrors) {
  const auto grid = TimeGrid::uniform(100);
  const auto curves = sim::sample_gp(sim::Kernel::squared_exponential(0.05), grid, 200, 3);
  EXPECT_EQ(fit_fpca(grid, curves, KRule::fixed(4)).K(), 4u);
  EXPECT_EQ(category_of([&] { fit_fpca(grid, curves.topRows(1)); }), ErrorCategory::insufficient_data);
  EXPECT_EQ(category_of([&] { fit_fpca(grid, curves, KRule::fixed(500)); }), ErrorCategory::insufficient_data);
  EXPECT_EQ(category_of([&] { fit_fpca(TimeGrid::uniform(50), curves); }), ErrorCategory::dimension);
}

TEST(FitFpca, SpectrumInvariants) {
  const FpcaModel& m = se_model();
  const auto& th = m.eigenvalues();
  for (Eigen::Index j = 1; j < th.size(); ++j) EXPECT_LE(th(j), th(j - 1));
  EXPECT_GE(th.minCoeff(), 0.0);
  EXPECT_GE(th(th.size() - 1), std::max(1e-10, 1e-8 * th(0)));
  const Eigen::MatrixXd g = gram(m);
  EXPECT_LT((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 1e-8);
  // sign convention: nonnegative quadrature-weighted sum
  for (Eigen::Index j = 0; j < m.eigenfunctions().cols(); ++j) {
    const Eigen::VectorXd psi = m.eigenfunctions().col(j);
    EXPECT_GE(integral({psi.data(), static_cast<std::size_t>(psi.size())}, m.grid()), -1e-12);
  }
}

TEST(ProjectScores, CenteredAndUnitSteps) {
  const FpcaModel& m = se_model();
  const Eigen::VectorXd mean = m.mean();
  const auto z = project_curve(m, {mean.data(), static_cast<std::size_t>(mean.size())});
  EXPECT_LT(z.cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::VectorXd step = mean + std::sqrt(m.eigenvalues()(0)) * m.eigenfunctions().col(0);
  const auto u = project_curve(m, {step.data(), static_cast<std::size_t>(step.size())});
  EXPECT_NEAR(u(0), 1.0, 1e-10);
  for (Eigen::Index j = 1; j < u.size(); ++j) EXPECT_NEAR(u(j), 0.0, 1e-10);
}

TEST(ProjectScores, StandardizedOnFittingData) {
  const auto grid = TimeGrid::uniform(100);
  const auto curves = sim::sample_gp(sim::Kernel::squared_exponential(0.05), grid, 2000, 11);
  const FpcaModel& m = se_model();
  const auto s = project_scores(m, curves).scores;
  const double n = static_cast<double>(s.rows());
  const Eigen::RowVectorXd mu = s.colwise().mean();
  const Eigen::MatrixXd centered = s.rowwise() - mu;
  const Eigen::MatrixXd cov = centered.transpose() * centered / n;
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    EXPECT_NEAR(cov(j, j), 1.0, 0.1);
    EXPECT_LT(std::abs(mu(j)), 1e-8);
    for (Eigen::Index k = 0; k < j; ++k) EXPECT_LT(std::abs(cov(j, k)), 3.0 / std::sqrt(n));
  }
  EXPECT_EQ(category_of([&] { project_scores(m, curves.leftCols(10)); }), ErrorCategory::dimension);
}

TEST(Reconstruct, RoundTripBoundedByTail) {
  const auto grid = TimeGrid::uniform(60);
  const auto curves = sim::sample_gp(sim::Kernel::matern(1.5, 0.2), grid, 500, 4);
  const FpcaModel m = fit_fpca(grid, curves, KRule::fixed(3));
  const auto scores = project_scores(m, curves).scores;
  double err2 = 0.0;
  for (Eigen::Index i = 0; i < curves.rows(); ++i) {
    const Eigen::VectorXd rec = reconstruct(m, scores.row(i).transpose());
    const Eigen::VectorXd diff = curves.row(i).transpose() - rec;
    err2 += inner_product({diff.data(), 60}, {diff.data(), 60}, grid);
  }
  err2 /= static_cast<double>(curves.rows());
  EXPECT_LE(err2, tail_residual(m, 3) + m.discarded_variance() + 1e-6);

  const FpcaModel full = m.with_K(m.J());
  const auto all = project_scores(full, curves).scores;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < curves.rows(); ++i) {
    const Eigen::VectorXd rec = reconstruct(full, all.row(i).transpose());
    const Eigen::VectorXd diff = curves.row(i).transpose() - rec;
    worst = std::max(worst, l2_norm({diff.data(), 60}, grid));
  }
  EXPECT_LE(worst * worst, 1e-8 + m.discarded_variance() * 10);
  EXPECT_EQ(reconstruct(m, Eigen::VectorXd::Zero(3)), m.mean());
}

TEST(TailResidual, EndpointsAndTelescoping) {
  const FpcaModel& m = se_model();
  EXPECT_EQ(tail_residual(m, m.J()), 0.0);
  EXPECT_NEAR(tail_residual(m, 0), m.total_variance(), 1e-12);
  for (std::size_t k = 1; k <= m.J(); ++k) {
    EXPECT_LE(tail_residual(m, k), tail_residual(m, k - 1));
    EXPECT_NEAR(tail_residual(m, k - 1) - tail_residual(m, k), m.eigenvalues()(static_cast<Eigen::Index>(k - 1)), 1e-12);
  }
  EXPECT_EQ(category_of([&] { tail_residual(m, m.J() + 1); }), ErrorCategory::dimension);
}

TEST(TailResidual, WienerSecondTailMatchesBrownianSpectrum) {
  const FpcaModel& m = wiener_model();
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const double analytic = (0.5 - 4.0 / pi2 - 4.0 / (9.0 * pi2)) / 0.5;
  EXPECT_NEAR(analytic, 0.0994, 1e-4);
  const double ratio = tail_residual(m, 2) / m.total_variance();
  EXPECT_NEAR(ratio, analytic, 0.15 * analytic);
}

TEST(DecayDiagnostic, SquaredExponentialPrefersExponential) {
  const auto r = decay_diagnostic(se_model());
  EXPECT_EQ(r.preferred, DecayLaw::exponential);
  EXPECT_LT(r.exponential_slope, 0.0);
  EXPECT_GT(r.exponential_r2, 0.9);
}

TEST(DecayDiagnostic, WienerPrefersPolynomialWithSlopeMinusOne) {
  const auto r = decay_diagnostic(wiener_model());
  EXPECT_EQ(r.preferred, DecayLaw::polynomial);
  EXPECT_GE(r.polynomial_slope, -1.25);
  EXPECT_LE(r.polynomial_slope, -0.75);
}

TEST(DecayDiagnostic, RankTwoIsFiniteRank) {
  const auto grid = TimeGrid::uniform(101);
  const auto r = decay_diagnostic(fit_fpca(grid, fixtures::rank2_curves(500, 9, grid)));
  EXPECT_TRUE(r.finite_rank);
  EXPECT_EQ(r.preferred, DecayLaw::finite_rank);
  EXPECT_NEAR(r.tail[2], 0.0, 1e-8);
}

TEST(FpcaBundle, RoundTrip) {
  const FpcaModel& m = se_model();
  std::stringstream ss;
  write_fpca_bundle(m, ss);
  const FpcaModel back = read_fpca_bundle(ss);
  EXPECT_EQ(back.J(), m.J());
  EXPECT_EQ(back.K(), m.K());
  EXPECT_TRUE(back.grid() == m.grid());
  EXPECT_EQ(back.eigenvalues(), m.eigenvalues());
  EXPECT_EQ(back.eigenfunctions(), m.eigenfunctions());
  EXPECT_EQ(back.mean(), m.mean());
  std::stringstream bad("not a bundle\n");
  EXPECT_EQ(category_of([&] { read_fpca_bundle(bad); }), ErrorCategory::io);
}

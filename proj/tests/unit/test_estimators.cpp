#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "mftp/estimators.hpp"
#include "mftp/stats.hpp"

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

struct GaussianSample {
  Eigen::VectorXd a, y, ratio;
};

// Score a ~ N(0,1), policy a -> a + delta, Y = a + N(0,1).
GaussianSample gaussian(std::size_t n, double delta, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  GaussianSample s{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    s.a(i) = z(rng);
    s.y(i) = s.a(i) + z(rng);
    s.ratio(i) = std::exp(delta * s.a(i) - delta * delta / 2.0);
  }
  return s;
}

PreparedData prepared_gaussian(const GaussianSample& s, double delta) {
  PreparedData p;
  const auto n = s.a.size();
  p.observed = s.a;
  p.shifted = s.a.array() + delta;
  p.covariates = Eigen::MatrixXd::Zero(n, 1);
  p.y = s.y;
  p.K = 1;
  p.K_m = 1;
  return p;
}

Dataset with_outcome(const Dataset& d, Eigen::VectorXd y) {
  return Dataset(d.grid(), d.curves(), d.covariates(), std::move(y), OutcomeKind::continuous);
}

}  // namespace

TEST(Estimators, IdentityPolicyReturnsSampleMean) {
  const Dataset d = fixtures::random_dataset(150, 1);
  PipelineSpec spec;
  spec.bootstrap_B = 0;
  const auto est = estimate_all(d, ModificationPolicy::identity(), spec);
  ASSERT_EQ(est.size(), 4u);
  const double ybar = d.outcomes().mean();
  for (const auto& e : est) EXPECT_NEAR(e.point, ybar, 1e-10) << to_string(e.estimator);
  EXPECT_FALSE(est[3].ci.has_value());
  EXPECT_NEAR(est[1].diagnostics.ess, 150.0, 1e-6);
}

TEST(Estimators, OrUnderAdditiveStepAddsCoefficient) {
  const Dataset d = fixtures::random_dataset(200, 2);
  auto basis = std::make_shared<const FpcaModel>(fit_fpca(d, KRule::fixed(4)));
  const Eigen::VectorXd step = std::sqrt(basis->eigenvalues()(0)) * basis->eigenfunctions().col(0);
  const auto pol = ModificationPolicy::additive({step.data(), step.data() + step.size()});
  PipelineSpec spec;
  spec.K_m = 4;
  const auto prep = prepare(d, pol, spec, basis);
  const auto model = fit_outcome(prep, spec);
  EXPECT_NEAR(estimate_or(prep, model).point, d.outcomes().mean() + model.coefficients()(1), 1e-8);
  // Curve-level route agrees with the score route.
  EXPECT_NEAR(estimate_or(d, pol, model).point, estimate_or(prep, model).point, 1e-8);
}

TEST(Ipw, MeanModes) {
  const Eigen::VectorXd y = (Eigen::VectorXd(3) << 1.0, 2.0, 3.0).finished();
  const Eigen::VectorXd w = (Eigen::VectorXd(3) << 1.0, 1.0, 2.0).finished();
  EXPECT_DOUBLE_EQ(ipw_mean(y, w, IpwMode::hajek), 9.0 / 4.0);
  EXPECT_DOUBLE_EQ(ipw_mean(y, w, IpwMode::plain), 3.0);
  const Eigen::VectorXd zero = (Eigen::VectorXd(3) << 1.0, -1.0, 0.0).finished();
  EXPECT_EQ(category_of([&] { ipw_mean(y, zero, IpwMode::hajek); }), ErrorCategory::estimate);
  EXPECT_EQ(category_of([&] { ipw_mean(y, w.head(2), IpwMode::hajek); }), ErrorCategory::dimension);
}

TEST(Ipw, IdenticalUnderWeightScaling) {
  const auto s = gaussian(300, 0.3, 3);
  const Eigen::VectorXd w = s.ratio * 7.5;
  EXPECT_NEAR(ipw_mean(s.y, w, IpwMode::hajek), ipw_mean(s.y, s.ratio, IpwMode::hajek), 1e-12);
}

TEST(Ipw, GaussianShiftWithinMonteCarloError) {
  const double delta = 0.3;
  const auto s = gaussian(5000, delta, 4);
  const auto prep = prepared_gaussian(s, delta);
  PipelineSpec spec;
  spec.K = 1;
  spec.weights.cap = CapRule::none();
  const auto w = fit_weights(prep, spec);
  const auto e = estimate_ipw(prep, w, IpwMode::hajek);
  const Eigen::VectorXd resid = (w.fitted.normalized.array() * (s.y.array() - e.point)).matrix();
  const double se = std::sqrt(stats::variance({resid.data(), 5000}) / 5000.0);
  EXPECT_LT(std::abs(e.point - delta), 3.0 * se);
}

TEST(Aipw, UnitWeightsAndRightOutcomeIsIdentity) {
  const auto s = gaussian(100, 0.3, 5);
  const Eigen::VectorXd m = Eigen::VectorXd::Constant(100, 0.7);
  const auto e = aipw_from_nuisances(s.y, m, m, Eigen::VectorXd::Ones(100));
  EXPECT_NEAR(e.point, s.y.mean(), 1e-12);
  EXPECT_EQ(category_of([&] { aipw_from_nuisances(s.y, m.head(3), m, m); }), ErrorCategory::dimension);
}

TEST(Aipw, OracleNuisancesAndOneWrongNuisance) {
  const double delta = 0.3;
  const auto s = gaussian(20000, delta, 6);
  const Eigen::VectorXd m_obs = s.a;
  const Eigen::VectorXd m_sh = s.a.array() + delta;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(s.a.size());
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(s.a.size());
  const auto both = aipw_from_nuisances(s.y, m_obs, m_sh, s.ratio);
  const auto wrong_m = aipw_from_nuisances(s.y, zero, zero, s.ratio);
  const auto wrong_w = aipw_from_nuisances(s.y, m_obs, m_sh, ones);
  for (const auto& e : {both, wrong_m, wrong_w}) EXPECT_LT(std::abs(e.point - delta), 4.0 * e.diagnostics.plugin_se);
  // Both wrong: converges to E[Y] = 0, far from delta.
  const auto neither = aipw_from_nuisances(s.y, zero, zero, ones);
  EXPECT_GT(std::abs(neither.point - delta), 10.0 * neither.diagnostics.plugin_se);
}

TEST(Aipw, CrossFittedOnGaussianShift) {
  const double delta = 0.3;
  const auto s = gaussian(4000, delta, 7);
  auto prep = prepared_gaussian(s, delta);
  // Outcome model on scores needs a basis; a one-component identity basis works.
  const auto grid = TimeGrid::uniform(10);
  CurveMatrix curves(4000, 10);
  for (Eigen::Index j = 0; j < 10; ++j) curves.col(j) = s.a;
  prep.basis = std::make_shared<const FpcaModel>(fit_fpca(grid, curves));
  PipelineSpec spec;
  spec.K = 1;
  spec.K_m = 1;
  AipwParts parts;
  const auto e = estimate_aipw(prep, spec, &parts);
  EXPECT_EQ(e.folds, 2u);
  EXPECT_LT(std::abs(e.point - delta), 4.0 * e.diagnostics.plugin_se);
  EXPECT_EQ(parts.fold_of.size(), 4000u);
  EXPECT_NEAR(parts.contributions.mean(), e.point, 1e-12);
}

TEST(Folds, BalancedDeterministicAndValidated) {
  const auto f = assign_folds(101, 3, 9);
  std::vector<std::size_t> count(3, 0);
  for (auto k : f) ++count[k];
  EXPECT_EQ(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()), 1u);
  EXPECT_EQ(f, assign_folds(101, 3, 9));
  EXPECT_NE(f, assign_folds(101, 3, 10));

  const Dataset d = fixtures::random_dataset(30, 3);
  PipelineSpec spec;
  spec.bootstrap_B = 0;
  spec.folds = 1;
  EXPECT_EQ(category_of([&] { estimate_aipw(d, ModificationPolicy::scale_warp(0.9), spec); }), ErrorCategory::config);
  spec.folds = 10;
  const Dataset small = d.subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  spec.K = 2;
  spec.K_m = 2;
  EXPECT_EQ(category_of([&] { estimate_aipw(small, ModificationPolicy::scale_warp(0.9), spec); }),
            ErrorCategory::insufficient_data);
}

TEST(Aipw, PerFoldBasisRuns) {
  const Dataset d = fixtures::random_dataset(200, 8);
  PipelineSpec spec;
  spec.per_fold_fpca = true;
  const auto e = estimate_aipw(d, ModificationPolicy::scale_warp(0.9), spec);
  EXPECT_TRUE(std::isfinite(e.point));
  spec.per_fold_fpca = false;
  const auto shared = estimate_aipw(d, ModificationPolicy::scale_warp(0.9), spec);
  EXPECT_NEAR(e.point, shared.point, 0.5);
}

TEST(Bootstrap, ConstantOutcomeGivesDegenerateInterval) {
  const Dataset d = with_outcome(fixtures::random_dataset(100, 10), Eigen::VectorXd::Constant(100, 2.5));
  PipelineSpec spec;
  spec.bootstrap_B = 100;
  const auto prep = prepare(d, ModificationPolicy::scale_warp(0.8), spec);
  // Plain IPW uses unnormalized capped odds, so it is not pinned to the constant.
  const EstimatorKind kinds[] = {EstimatorKind::OR, EstimatorKind::IPW_hajek, EstimatorKind::AIPW};
  const auto r = bootstrap(prep, spec, kinds);
  ASSERT_EQ(r.intervals.size(), 3u);
  for (const auto& iv : r.intervals) {
    EXPECT_NEAR(iv.lo, 2.5, 1e-9);
    EXPECT_NEAR(iv.hi, 2.5, 1e-9);
  }
}

TEST(Bootstrap, NestedDeterministicAndThreadIndependent) {
  const Dataset d = fixtures::random_dataset(120, 11);
  PipelineSpec spec;
  spec.bootstrap_B = 200;
  const auto prep = prepare(d, ModificationPolicy::scale_warp(0.8), spec);
  const EstimatorKind kinds[] = {EstimatorKind::OR, EstimatorKind::AIPW};
  const auto wide = bootstrap(prep, spec, kinds);
  spec.alpha = 0.2;
  const auto narrow = bootstrap(prep, spec, kinds);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_LE(wide.intervals[k].lo, narrow.intervals[k].lo);
    EXPECT_GE(wide.intervals[k].hi, narrow.intervals[k].hi);
    EXPECT_LT(wide.intervals[k].lo, wide.intervals[k].hi);
  }
  spec.alpha = 0.05;
  spec.threads = 3;
  const auto threaded = bootstrap(prep, spec, kinds);
  EXPECT_EQ(threaded.draws, wide.draws);
  spec.bootstrap_B = 50;
  EXPECT_EQ(category_of([&] { bootstrap(prep, spec, kinds); }), ErrorCategory::config);
}

TEST(Bootstrap, EstimateAllAttachesIntervals) {
  const Dataset d = fixtures::random_dataset(100, 12);
  PipelineSpec spec;
  spec.bootstrap_B = 100;
  const auto est = estimate_all(d, ModificationPolicy::scale_warp(0.8), spec);
  for (const auto& e : est) {
    ASSERT_TRUE(e.ci.has_value());
    EXPECT_EQ(e.bootstrap_B, 100u);
    EXPECT_LE(e.ci->lo, e.ci->hi);
  }
  EXPECT_TRUE(std::isfinite(est[3].diagnostics.plugin_se));
}

TEST(PercentileInterval, TypeSevenQuantiles) {
  std::vector<double> draws(101);
  for (std::size_t i = 0; i <= 100; ++i) draws[i] = static_cast<double>(100 - i);
  const auto iv = percentile_interval(draws, 0.1);
  EXPECT_DOUBLE_EQ(iv.lo, 5.0);
  EXPECT_DOUBLE_EQ(iv.hi, 95.0);
  EXPECT_EQ(category_of([&] { percentile_interval(draws, 1.5); }), ErrorCategory::config);
  EXPECT_EQ(category_of([] { percentile_interval({}, 0.05); }), ErrorCategory::estimate);
}

TEST(EstimatorNames, RoundTrip) {
  for (auto k : kAllEstimators) EXPECT_EQ(estimator_from_string(to_string(k)), k);
  EXPECT_EQ(category_of([] { estimator_from_string("TMLE"); }), ErrorCategory::config);
}

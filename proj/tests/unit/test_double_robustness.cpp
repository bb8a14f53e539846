#include <gtest/gtest.h>

#include <cmath>

#include "mftp/simgen.hpp"

using namespace mftp;

namespace {

struct Biases {
  double ipw = 0.0, outcome = 0.0, aipw = 0.0;
};

Biases biases_at_1600(int scenario) {
  auto cfg = sim::scenario_config(scenario);
  sim::ScenarioOptions opt;
  opt.n_grid = {1600};
  opt.replications = 200;
  const auto r = sim::run_scenario(cfg, opt);
  return {r.summary(EstimatorKind::IPW_hajek, 1600, 4).bias, r.summary(EstimatorKind::OR, 1600, 4).bias,
          r.summary(EstimatorKind::AIPW, 1600, 4).bias};
}

}  // namespace

// Scenario 2: the outcome model is right, the weights are the weak nuisance.
TEST(DoubleRobustness, AipwBeatsIpwWhenOutcomeModelHolds) {
  const auto b = biases_at_1600(2);
  EXPECT_LT(std::abs(b.aipw), std::abs(b.ipw)) << "AIPW " << b.aipw << " IPW " << b.ipw;
}

// Scenario 3: the linear outcome model is misspecified.
TEST(DoubleRobustness, AipwBeatsOutcomeRegressionUnderMisspecification) {
  const auto b = biases_at_1600(3);
  EXPECT_LT(std::abs(b.aipw), std::abs(b.outcome)) << "AIPW " << b.aipw << " OR " << b.outcome;
}

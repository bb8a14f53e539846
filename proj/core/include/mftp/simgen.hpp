#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mftp/estimators.hpp"
#include "mftp/fgrid.hpp"
#include "mftp/policy.hpp"
#include "mftp/random.hpp"

namespace mftp::sim {

enum class KernelKind { squared_exponential, matern, wiener };

/// Covariance kernel on normalized time.
///  - squared_exponential: exp(-(s - t)^2 / (2 length^2))
///  - matern: half-integer closed forms for nu in {0.5, 1.5, 2.5}, range `length`
///  - wiener: min(s, t)
/// A negative `sign` flips the SE exponent; only used to show that form is not PSD.
struct Kernel {
  KernelKind kind = KernelKind::squared_exponential;
  double length = 0.05;
  double nu = 1.5;
  double sign = -1.0;

  static Kernel squared_exponential(double sigma);
  static Kernel matern(double nu, double rho);
  static Kernel wiener();

  double operator()(double s, double t) const;
  std::string describe() const;
};

Eigen::MatrixXd kernel_matrix(const Kernel& kernel, const TimeGrid& grid);

/// Draws zero-mean Gaussian curves on a grid from a symmetric factor of the
/// kernel matrix (eigendecomposition, jitter added until PSD).
class GpSampler {
 public:
  GpSampler(const Kernel& kernel, const TimeGrid& grid);

  const Eigen::MatrixXd& factor() const noexcept { return factor_; }  // T x rank
  std::size_t rank() const noexcept { return static_cast<std::size_t>(factor_.cols()); }
  double jitter() const noexcept { return jitter_; }

  CurveMatrix sample(std::size_t n, Rng& rng) const;

 private:
  Eigen::MatrixXd factor_;
  double jitter_ = 0.0;
};

CurveMatrix sample_gp(const Kernel& kernel, const TimeGrid& grid, std::size_t n, std::uint64_t seed);

/// 2 + sin(2 pi t) + 0.5 sin(4 pi t).
std::vector<double> default_mean_function(const TimeGrid& grid);

/// Confounded covariates: p/3 normal(mu_i, 1), p/3 Bernoulli(p_i) and p/3
/// Poisson(lambda_i) columns, in that order. mu_i is the curve average,
/// p_i = clip(avg of points 1-10 / bernoulli_scale, 0, 1) and
/// lambda_i = floor(|avg of points 11-20| / 3). When no scale is given the
/// sample maximum of the first-10 averages is used.
Eigen::MatrixXd gen_covariates(const CurveMatrix& curves, std::size_t p, Rng& rng,
                               std::optional<double> bernoulli_scale = std::nullopt);
Eigen::MatrixXd gen_covariates(const CurveMatrix& curves, std::size_t p, std::uint64_t seed,
                               std::optional<double> bernoulli_scale = std::nullopt);

enum class OutcomeModelKind { simple, complex };

std::string_view to_string(OutcomeModelKind kind) noexcept;

/// beta(t) = 0.084 - (t - 0.5)^2 on the normalized grid.
std::vector<double> beta_t(const TimeGrid& grid);
Eigen::VectorXd draw_beta_x(std::size_t p, std::uint64_t seed);

/// eta_A for every curve: int A(t) beta(t) dt.
Eigen::VectorXd eta_a(const CurveMatrix& curves, const TimeGrid& grid);

/// simple: eta_A + eta_X / sqrt(p);
/// complex: -2 (log max(|eta_A|, 1e-8))^2 + eta_A X_1 + eta_X + X_2 X_3^2 / 5.
Eigen::VectorXd mean_outcome(OutcomeModelKind kind, const Eigen::VectorXd& eta, const Eigen::MatrixXd& covariates,
                             const Eigen::VectorXd& beta_x);

/// mean_outcome plus standard normal noise.
Eigen::VectorXd gen_outcome(const CurveMatrix& curves, const TimeGrid& grid, const Eigen::MatrixXd& covariates,
                            OutcomeModelKind kind, const Eigen::VectorXd& beta_x, Rng& rng);

struct SimConfig {
  std::string name = "custom";
  std::size_t n = 800;
  std::size_t T = 100;
  std::size_t p = 15;
  Kernel kernel = Kernel::squared_exponential(0.05);
  std::optional<std::vector<double>> mean;  // a_0 on the grid; default_mean_function otherwise
  OutcomeModelKind outcome = OutcomeModelKind::simple;
  ModificationPolicy policy = ModificationPolicy::scale_warp(1.0);
  std::size_t K = 4;
  std::optional<std::size_t> K_m;  // default: variance-0.95 K of each fitted basis
  std::size_t replications = 200;
  std::uint64_t seed = 1;
  std::size_t oracle_draws = 2'000'000;

  void validate() const;
  TimeGrid grid() const { return TimeGrid::uniform(T); }
};

/// Scenarios 1-4: {simple, complex} outcome x tau in {1, 0.8}, warp exponent
/// 1.2, SE kernel with sigma_A = 5/T, T = 100, p = 15, K = 4.
SimConfig scenario_config(int scenario, std::uint64_t root_seed = 20240101);

struct SimulatedData {
  Dataset data;
  Eigen::VectorXd mu_observed;  // true mean outcome at the observed curves
  Eigen::VectorXd mu_shifted;   // true mean outcome at the policy-shifted curves
};

/// Structural pieces that stay fixed across replications of one config.
struct SimModel {
  TimeGrid grid;
  std::vector<double> mean;
  GpSampler sampler;
  Eigen::VectorXd beta_x;
  double bernoulli_scale = 1.0;

  explicit SimModel(const SimConfig& config);
};

SimulatedData generate(const SimConfig& config, const SimModel& model, std::size_t n, std::uint64_t seed);
SimulatedData generate(const SimConfig& config, std::uint64_t seed);
Dataset generate_dataset(const SimConfig& config, std::uint64_t seed);

struct OracleResult {
  double mean = 0.0;
  double se = 0.0;
  std::size_t draws = 0;
};

/// Monte Carlo E[mu_Y(X, q(A))] over fresh subjects, in fixed-size chunks
/// so the result does not depend on the thread count.
OracleResult oracle_truth(const SimConfig& config, std::uint64_t seed, std::size_t threads = 1);

struct ReplicationRecord {
  std::size_t n = 0;
  std::size_t rep = 0;
  std::size_t K = 0;
  std::size_t K_m = 0;
  bool failed = false;
  std::string error;
  double estimates[4] = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                         std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  std::optional<Interval> intervals[4];
  double aipw_plugin_se = std::numeric_limits<double>::quiet_NaN();
};

struct EstimatorSummary {
  EstimatorKind estimator = EstimatorKind::AIPW;
  std::size_t n = 0;
  std::size_t K = 0;
  std::size_t successes = 0;
  double bias = 0.0;
  double bias_se = 0.0;
  double mse = 0.0;
  double mse_se = 0.0;
  double sd = 0.0;
  std::optional<double> coverage;
  double coverage_se = 0.0;
  double mean_ci_width = 0.0;
};

struct ScenarioOptions {
  std::vector<std::size_t> n_grid;  // default {config.n}
  std::vector<std::size_t> K_grid;  // default {config.K}
  std::optional<std::size_t> replications;  // default config.replications
  bool bootstrap = false;
  std::size_t bootstrap_B = 500;
  double alpha = 0.05;
  std::vector<EstimatorKind> bootstrap_kinds = {EstimatorKind::AIPW};
  std::size_t folds = 2;
  LambdaRule lambda = LambdaRule::gcv();
  WeightOptions weights;
  std::size_t threads = 1;
  std::optional<OracleResult> truth;
  double max_failure_fraction = 0.02;
};

struct ScenarioResult {
  SimConfig config;
  OracleResult truth;
  std::vector<ReplicationRecord> records;
  std::vector<EstimatorSummary> summaries;
  std::size_t failures = 0;
  double runtime_seconds = 0.0;
  std::vector<std::string> warnings;

  const EstimatorSummary& summary(EstimatorKind kind, std::size_t n, std::size_t K) const;
};

int kind_index(EstimatorKind kind) noexcept;

ScenarioResult run_scenario(const SimConfig& config, const ScenarioOptions& options = {});

/// Least-squares slope of log MSE on log n; needs at least 4 points.
double mse_slope(std::span<const double> ns, std::span<const double> mses);
double mse_slope(const ScenarioResult& result, EstimatorKind kind, std::size_t K);

/// Synthetic accelerometer-like day: clock grid over 24 h, nonnegative
/// curves with low nighttime activity, binary outcome.
struct ActivityConfig {
  std::size_t n = 600;
  std::size_t step_minutes = 10;
  std::size_t p = 3;
  std::uint64_t seed = 7;
};

Dataset generate_activity_dataset(const ActivityConfig& config);

}  // namespace mftp::sim

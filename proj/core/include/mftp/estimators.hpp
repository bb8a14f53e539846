#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <span>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mftp/fgrid.hpp"
#include "mftp/fpca.hpp"
#include "mftp/outcome.hpp"
#include "mftp/policy.hpp"
#include "mftp/weights.hpp"

namespace mftp {

enum class EstimatorKind { OR, IPW_hajek, IPW_plain, AIPW };

std::string_view to_string(EstimatorKind kind) noexcept;
EstimatorKind estimator_from_string(std::string_view name);
inline constexpr EstimatorKind kAllEstimators[] = {EstimatorKind::OR, EstimatorKind::IPW_hajek, EstimatorKind::IPW_plain,
                                                   EstimatorKind::AIPW};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct EstimateDiagnostics {
  double weight_min = 0.0;
  double weight_max = 0.0;
  double ess = 0.0;
  double tail_residual = 0.0;  // Delta_K of the basis at the weighting K
  std::size_t cap_hits = 0;
  bool separation = false;
  double plugin_se = std::numeric_limits<double>::quiet_NaN();  // AIPW only
  std::size_t bootstrap_skipped = 0;
  std::vector<std::string> warnings;
};

struct MftpEstimate {
  EstimatorKind estimator = EstimatorKind::AIPW;
  double point = 0.0;
  std::optional<Interval> ci;
  double alpha = 0.05;
  std::size_t n = 0;
  std::size_t K = 0;
  std::size_t K_m = 0;
  std::size_t folds = 0;
  std::size_t bootstrap_B = 0;
  EstimateDiagnostics diagnostics;
};

/// Everything the estimators need besides the data itself.
struct PipelineSpec {
  std::size_t K = 4;                     // components in the weight model
  std::optional<std::size_t> K_m;        // outcome components; default basis K
  KRule basis_rule = KRule::variance_fraction(0.95);
  std::size_t folds = 2;
  LambdaRule lambda = LambdaRule::gcv();
  std::optional<Link> link;
  WeightOptions weights;
  std::uint64_t seed = 20240101;
  std::size_t bootstrap_B = 500;
  double alpha = 0.05;
  bool refit_fpca_in_bootstrap = false;
  bool per_fold_fpca = false;
  std::size_t threads = 1;
};

/// Data projected on one FPCA basis: observed and policy-shifted scores for
/// the first max(K, K_m) components, covariates and outcomes.
struct PreparedData {
  std::shared_ptr<const FpcaModel> basis;
  Eigen::MatrixXd observed;
  Eigen::MatrixXd shifted;
  Eigen::MatrixXd covariates;
  Eigen::VectorXd y;
  std::size_t K = 0;
  std::size_t K_m = 0;
  Link link = Link::identity;

  std::size_t n() const noexcept { return static_cast<std::size_t>(y.size()); }
  PreparedData subset(std::span<const std::size_t> rows) const;
};

/// Fits the basis (unless given) and projects observed and shifted curves.
PreparedData prepare(const Dataset& data, const ModificationPolicy& policy, const PipelineSpec& spec,
                     std::shared_ptr<const FpcaModel> basis = nullptr);

OutcomeModel fit_outcome(const PreparedData& prep, const PipelineSpec& spec);
WeightModel fit_weights(const PreparedData& prep, const PipelineSpec& spec);

/// Mean of m-hat at each subject's shifted curve.
MftpEstimate estimate_or(const PreparedData& prep, const OutcomeModel& model);
MftpEstimate estimate_or(const Dataset& data, const ModificationPolicy& policy, const OutcomeModel& model);

enum class IpwMode { hajek, plain };

/// hajek: sum(w y) / sum(w) on normalized weights; plain: mean(w y) on the
/// capped odds.
double ipw_mean(const Eigen::VectorXd& y, const Eigen::VectorXd& weights, IpwMode mode);
MftpEstimate estimate_ipw(const PreparedData& prep, const WeightModel& model, IpwMode mode);

struct AipwParts {
  Eigen::VectorXd contributions;
  Eigen::VectorXd m_observed;
  Eigen::VectorXd m_shifted;
  Eigen::VectorXd weights;
  std::vector<std::size_t> fold_of;
};

/// Cross-fitted AIPW. Fold assignment is a seeded permutation split into
/// near-equal parts; both nuisances are refit on each fold's complement.
MftpEstimate estimate_aipw(const PreparedData& prep, const PipelineSpec& spec, AipwParts* parts = nullptr);
MftpEstimate estimate_aipw(const Dataset& data, const ModificationPolicy& policy, const PipelineSpec& spec);

/// AIPW from supplied nuisance values (e.g. the true m and density ratio).
MftpEstimate aipw_from_nuisances(const Eigen::VectorXd& y, const Eigen::VectorXd& m_observed,
                                 const Eigen::VectorXd& m_shifted, const Eigen::VectorXd& weights);

std::vector<std::size_t> assign_folds(std::size_t n, std::size_t folds, std::uint64_t seed);

/// Point estimates of the requested kinds on one prepared sample.
std::vector<double> point_estimates(const PreparedData& prep, const PipelineSpec& spec,
                                    std::span<const EstimatorKind> kinds);

struct BootstrapResult {
  std::vector<Interval> intervals;  // one per requested kind
  std::vector<std::vector<double>> draws;
  std::size_t skipped = 0;
  std::size_t requested = 0;
  std::vector<std::string> warnings;
};

/// Percentile intervals from B subject-level resamples. The basis is reused
/// unless spec.refit_fpca_in_bootstrap, in which case `data` must be given.
BootstrapResult bootstrap(const PreparedData& prep, const PipelineSpec& spec, std::span<const EstimatorKind> kinds,
                          const Dataset* data = nullptr, const ModificationPolicy* policy = nullptr);

Interval percentile_interval(std::span<const double> draws, double alpha);

/// All four estimators with diagnostics and, when B > 0, bootstrap intervals.
std::vector<MftpEstimate> estimate_all(const Dataset& data, const ModificationPolicy& policy, const PipelineSpec& spec,
                                       std::shared_ptr<const FpcaModel> basis = nullptr);

}  // namespace mftp

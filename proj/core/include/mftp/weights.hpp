#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "mftp/fgrid.hpp"
#include "mftp/fpca.hpp"
#include "mftp/glm.hpp"
#include "mftp/policy.hpp"

namespace mftp {

/// Observed rows (label 0) stacked over policy-shifted rows (label 1).
///
/// Covariates are stored once; row i and row n + i share them.
struct AugmentedDataset {
  Eigen::MatrixXd covariates;  // n x p
  Eigen::MatrixXd observed;    // n x K standardized scores
  Eigen::MatrixXd shifted;     // n x K standardized scores under the policy

  std::size_t n() const noexcept { return static_cast<std::size_t>(covariates.rows()); }
  std::size_t p() const noexcept { return static_cast<std::size_t>(covariates.cols()); }
  std::size_t K() const noexcept { return static_cast<std::size_t>(observed.cols()); }

  /// 2n x (p + K) rows [X, scores]; observed first.
  Eigen::MatrixXd stacked() const;
  /// 0 for the first n rows, 1 for the rest.
  Eigen::VectorXd labels() const;
};

AugmentedDataset build_augmented(const Dataset& data, const FpcaModel& model, const ModificationPolicy& policy,
                                 std::size_t K);
/// From precomputed score blocks; only the first K columns of each are used.
AugmentedDataset build_augmented(const Eigen::MatrixXd& covariates, const Eigen::MatrixXd& observed,
                                 const Eigen::MatrixXd& shifted, std::size_t K);

/// linear: [X, A]; quadratic adds A_j^2; pairwise adds A_j^2 and A_j A_k.
enum class FeatureMap { linear, quadratic, pairwise };

std::string_view to_string(FeatureMap map) noexcept;
FeatureMap feature_map_from_string(std::string_view name);

Eigen::MatrixXd expand_features(FeatureMap map, const Eigen::MatrixXd& covariates, const Eigen::MatrixXd& scores);
std::vector<std::string> feature_names(FeatureMap map, std::size_t p, std::size_t K);

/// Weights above min(hard_cap, percentile quantile) are truncated, then all
/// weights are rescaled to mean 1. Repeated until nothing exceeds the cap.
struct CapRule {
  bool enabled = true;
  double percentile = 0.99;
  double hard_cap = 50.0;

  static CapRule none() { return {false, 1.0, 0.0}; }
};

struct CappedWeights {
  Eigen::VectorXd capped;      // truncated, original scale
  Eigen::VectorXd normalized;  // truncated, mean 1
  double cap = 0.0;            // truncation level on the original scale (inf when none)
  std::size_t hits = 0;
};

CappedWeights cap_and_normalize(const Eigen::VectorXd& raw, const CapRule& rule);

struct WeightOptions {
  FeatureMap features = FeatureMap::linear;
  CapRule cap;
  double ridge = 4.0;
  double separation_bound = 25.0;  // |standardized coefficient| above this flags separation
};

/// Logistic classifier of label on features of (X, scores); odds at an
/// observed point estimate the density ratio of shifted to observed scores.
class WeightModel {
 public:
  WeightModel(FeatureMap features, glm::Standardizer standardizer, Eigen::VectorXd beta, std::size_t K, std::size_t p,
              CapRule cap);

  FeatureMap features() const noexcept { return features_; }
  std::size_t K() const noexcept { return K_; }
  std::size_t p() const noexcept { return p_; }
  const CapRule& cap_rule() const noexcept { return cap_; }
  /// Intercept first, then one coefficient per standardized feature.
  const Eigen::VectorXd& standardized_coefficients() const noexcept { return beta_; }
  /// Intercept and feature coefficients in original feature units.
  Eigen::VectorXd coefficients() const;

  Eigen::VectorXd log_odds(const Eigen::MatrixXd& covariates, const Eigen::MatrixXd& scores) const;
  Eigen::VectorXd odds(const Eigen::MatrixXd& covariates, const Eigen::MatrixXd& scores) const;
  /// Odds at the given points, capped and normalized among themselves.
  CappedWeights weights_for(const Eigen::MatrixXd& covariates, const Eigen::MatrixXd& scores) const;

  // Results on the fitting data's observed rows.
  Eigen::VectorXd raw_odds;
  CappedWeights fitted;
  bool separation = false;
  std::size_t iterations = 0;
  std::vector<std::string> warnings;

 private:
  FeatureMap features_;
  glm::Standardizer standardizer_;
  Eigen::VectorXd beta_;
  std::size_t K_;
  std::size_t p_;
  CapRule cap_;
};

WeightModel fit_weight_model(const AugmentedDataset& aug, const WeightOptions& options = {});

struct BalanceRow {
  std::string feature;
  double smd_before = 0.0;
  double smd_after = 0.0;
};

struct BalanceReport {
  std::vector<BalanceRow> rows;
  double ess = 0.0;
  std::size_t n = 0;
  double weight_min = 0.0;
  double weight_max = 0.0;
  std::size_t cap_hits = 0;
};

/// Standardized mean differences of each linear feature between the shifted
/// rows and the (weighted) observed rows, and the effective sample size.
BalanceReport balance_diagnostics(const WeightModel& model, const AugmentedDataset& aug);
BalanceReport balance_diagnostics(const Eigen::VectorXd& weights, const AugmentedDataset& aug);

double effective_sample_size(const Eigen::VectorXd& weights);

}  // namespace mftp

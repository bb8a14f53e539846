#include "mftp/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mftp/stats.hpp"

namespace mftp {

Eigen::MatrixXd AugmentedDataset::stacked() const {
  const auto n = covariates.rows();
  const auto p = covariates.cols();
  const auto K = observed.cols();
  Eigen::MatrixXd out(2 * n, p + K);
  out.topLeftCorner(n, p) = covariates;
  out.bottomLeftCorner(n, p) = covariates;
  out.topRightCorner(n, K) = observed;
  out.bottomRightCorner(n, K) = shifted;
  return out;
}

Eigen::VectorXd AugmentedDataset::labels() const {
  const auto n = covariates.rows();
  Eigen::VectorXd z(2 * n);
  z.head(n).setZero();
  z.tail(n).setOnes();
  return z;
}

AugmentedDataset build_augmented(const Eigen::MatrixXd& covariates, const Eigen::MatrixXd& observed,
                                 const Eigen::MatrixXd& shifted, std::size_t K) {
  const auto k = static_cast<Eigen::Index>(K);
  if (observed.cols() < k) throw_dimension("build_augmented observed scores", K, static_cast<std::size_t>(observed.cols()));
  if (shifted.cols() < k) throw_dimension("build_augmented shifted scores", K, static_cast<std::size_t>(shifted.cols()));
  if (observed.rows() != covariates.rows() || shifted.rows() != covariates.rows()) {
    throw_dimension("build_augmented rows", static_cast<std::size_t>(covariates.rows()),
                    static_cast<std::size_t>(observed.rows() != covariates.rows() ? observed.rows() : shifted.rows()));
  }
  return {covariates, observed.leftCols(k), shifted.leftCols(k)};
}

AugmentedDataset build_augmented(const Dataset& data, const FpcaModel& model, const ModificationPolicy& policy,
                                 std::size_t K) {
  if (K > model.J()) throw_dimension("build_augmented K", model.J(), K);
  if (!(model.grid() == data.grid())) throw Error(ErrorCategory::dimension, "build_augmented: model and data grids differ");
  const auto observed = project_scores(model, data.curves(), K).scores;
  const auto shifted = shifted_scores(policy, model, data, K).scores;
  return build_augmented(data.covariates(), observed, shifted, K);
}

std::string_view to_string(FeatureMap map) noexcept {
  switch (map) {
    case FeatureMap::linear: return "linear";
    case FeatureMap::quadratic: return "quadratic";
    case FeatureMap::pairwise: return "pairwise";
  }
  return "linear";
}

FeatureMap feature_map_from_string(std::string_view name) {
  if (name == "linear") return FeatureMap::linear;
  if (name == "quadratic") return FeatureMap::quadratic;
  if (name == "pairwise") return FeatureMap::pairwise;
  throw Error(ErrorCategory::config, "unknown feature map '" + std::string(name) + "' (linear, quadratic, pairwise)");
}

Eigen::MatrixXd expand_features(FeatureMap map, const Eigen::MatrixXd& covariates, const Eigen::MatrixXd& scores) {
  const auto n = covariates.rows();
  const auto p = covariates.cols();
  const auto K = scores.cols();
  Eigen::Index extra = 0;
  if (map == FeatureMap::quadratic) extra = K;
  if (map == FeatureMap::pairwise) extra = K + K * (K - 1) / 2;
  Eigen::MatrixXd f(n, p + K + extra);
  f.leftCols(p) = covariates;
  f.middleCols(p, K) = scores;
  Eigen::Index c = p + K;
  if (map != FeatureMap::linear) {
    for (Eigen::Index j = 0; j < K; ++j) f.col(c++) = scores.col(j).array().square();
  }
  if (map == FeatureMap::pairwise) {
    for (Eigen::Index j = 0; j < K; ++j) {
      for (Eigen::Index k = j + 1; k < K; ++k) f.col(c++) = scores.col(j).cwiseProduct(scores.col(k));
    }
  }
  return f;
}

std::vector<std::string> feature_names(FeatureMap map, std::size_t p, std::size_t K) {
  std::vector<std::string> names;
  for (std::size_t k = 1; k <= p; ++k) names.push_back("X_" + std::to_string(k));
  for (std::size_t j = 1; j <= K; ++j) names.push_back("A_" + std::to_string(j));
  if (map != FeatureMap::linear) {
    for (std::size_t j = 1; j <= K; ++j) names.push_back("A_" + std::to_string(j) + "^2");
  }
  if (map == FeatureMap::pairwise) {
    for (std::size_t j = 1; j <= K; ++j) {
      for (std::size_t k = j + 1; k <= K; ++k) names.push_back("A_" + std::to_string(j) + "*A_" + std::to_string(k));
    }
  }
  return names;
}

CappedWeights cap_and_normalize(const Eigen::VectorXd& raw, const CapRule& rule) {
  const auto n = raw.size();
  if (n == 0) throw Error(ErrorCategory::estimate, "no weights to normalize");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(raw(i)) || !(raw(i) > 0.0)) {
      throw Error(ErrorCategory::estimate, "weight " + std::to_string(i) + " is not finite and positive");
    }
  }
  CappedWeights out;
  out.capped = raw;
  out.cap = std::numeric_limits<double>::infinity();
  if (rule.enabled) {
    if (!(rule.percentile > 0.0 && rule.percentile <= 1.0) || !(rule.hard_cap > 0.0)) {
      throw Error(ErrorCategory::config, "weight cap needs percentile in (0, 1] and hard_cap > 0");
    }
    // The percentile is taken on the mean-1 scale where the hard cap is defined.
    // Truncating at an order statistic keeps that order statistic in place, so
    // one pass settles the percentile part; the loop only matters when the
    // hard cap binds and renormalization pushes values back above it.
    double scale = out.capped.mean();
    for (int pass = 0; pass < 100; ++pass) {
      const Eigen::VectorXd unit = out.capped / scale;
      const double q = stats::nearest_rank_quantile({unit.data(), static_cast<std::size_t>(n)}, rule.percentile);
      const double cap_unit = std::min(rule.hard_cap, q);
      if (unit.maxCoeff() <= cap_unit * (1.0 + 1e-12)) break;
      out.cap = cap_unit * scale;
      out.capped = out.capped.cwiseMin(out.cap);
      scale = out.capped.mean();
    }
    for (Eigen::Index i = 0; i < n; ++i) out.hits += raw(i) > out.cap ? 1 : 0;
  }
  out.normalized = out.capped / out.capped.mean();
  return out;
}

WeightModel::WeightModel(FeatureMap features, glm::Standardizer standardizer, Eigen::VectorXd beta, std::size_t K,
                         std::size_t p, CapRule cap)
    : features_(features), standardizer_(std::move(standardizer)), beta_(std::move(beta)), K_(K), p_(p), cap_(cap) {
  if (beta_.size() != standardizer_.center.size() + 1) {
    throw_dimension("WeightModel coefficients", static_cast<std::size_t>(standardizer_.center.size() + 1),
                    static_cast<std::size_t>(beta_.size()));
  }
}

Eigen::VectorXd WeightModel::coefficients() const {
  Eigen::VectorXd out(beta_.size());
  double shift = 0.0;
  for (Eigen::Index k = 0; k + 1 < beta_.size(); ++k) {
    const double b = standardizer_.constant[static_cast<std::size_t>(k)] ? 0.0 : beta_(k + 1) / standardizer_.scale(k);
    out(k + 1) = b;
    shift += b * standardizer_.center(k);
  }
  out(0) = beta_(0) - shift;
  return out;
}

Eigen::VectorXd WeightModel::log_odds(const Eigen::MatrixXd& covariates, const Eigen::MatrixXd& scores) const {
  if (static_cast<std::size_t>(covariates.cols()) != p_) throw_dimension("weight covariates", p_, static_cast<std::size_t>(covariates.cols()));
  if (static_cast<std::size_t>(scores.cols()) < K_) throw_dimension("weight scores", K_, static_cast<std::size_t>(scores.cols()));
  const Eigen::MatrixXd z = standardizer_.apply(expand_features(features_, covariates, scores.leftCols(static_cast<Eigen::Index>(K_))));
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(z.rows(), beta_(0));
  eta.noalias() += z * beta_.tail(beta_.size() - 1);
  return eta;
}

Eigen::VectorXd WeightModel::odds(const Eigen::MatrixXd& covariates, const Eigen::MatrixXd& scores) const {
  // Balanced classes: p / (1 - p) = exp(eta).
  return log_odds(covariates, scores).array().exp().matrix();
}

CappedWeights WeightModel::weights_for(const Eigen::MatrixXd& covariates, const Eigen::MatrixXd& scores) const {
  return cap_and_normalize(odds(covariates, scores), cap_);
}

WeightModel fit_weight_model(const AugmentedDataset& aug, const WeightOptions& options) {
  const std::size_t n = aug.n();
  if (n < 2) throw Error(ErrorCategory::insufficient_data, "weight model needs at least 2 subjects");
  if (aug.shifted.rows() != aug.observed.rows() || aug.shifted.cols() != aug.observed.cols()) {
    throw Error(ErrorCategory::dimension, "augmented score blocks differ in shape");
  }
  Eigen::MatrixXd x(2 * static_cast<Eigen::Index>(n), 0);
  {
    Eigen::MatrixXd cov(2 * static_cast<Eigen::Index>(n), aug.covariates.cols());
    cov << aug.covariates, aug.covariates;
    Eigen::MatrixXd sc(2 * static_cast<Eigen::Index>(n), aug.observed.cols());
    sc << aug.observed, aug.shifted;
    x = expand_features(options.features, cov, sc);
  }
  const auto st = glm::Standardizer::fit(x);
  const Eigen::MatrixXd z = st.apply(x);
  const Eigen::VectorXd labels = aug.labels();
  auto fit = glm::logistic(z, labels, options.ridge);
  if (!fit.converged) {
    std::ostringstream os;
    os << "weight classifier IRLS did not converge in " << fit.iterations << " iterations; penalized deviance trace:";
    for (double v : fit.trace) os << " " << v;
    throw Error(ErrorCategory::fit, os.str());
  }
  WeightModel model(options.features, st, fit.beta, aug.K(), aug.p(), options.cap);
  model.iterations = fit.iterations;
  const double largest = fit.beta.size() > 1 ? fit.beta.tail(fit.beta.size() - 1).cwiseAbs().maxCoeff() : 0.0;
  if (largest > options.separation_bound) {
    model.separation = true;
    std::ostringstream os;
    os << "possible separation between observed and shifted scores (largest standardized coefficient " << largest
       << "); weights are capped";
    model.warnings.push_back(os.str());
  }
  model.raw_odds = model.odds(aug.covariates, aug.observed);
  CapRule rule = options.cap;
  if (model.separation && !rule.enabled) rule = CapRule{};
  model.fitted = cap_and_normalize(model.raw_odds, rule);
  if (model.fitted.hits > 0) {
    model.warnings.push_back(std::to_string(model.fitted.hits) + " weights truncated at " + std::to_string(model.fitted.cap));
  }
  return model;
}

double effective_sample_size(const Eigen::VectorXd& weights) {
  const double s = weights.sum();
  const double s2 = weights.squaredNorm();
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

BalanceReport balance_diagnostics(const Eigen::VectorXd& weights, const AugmentedDataset& aug) {
  const auto n = static_cast<Eigen::Index>(aug.n());
  if (weights.size() != n) throw_dimension("balance weights", aug.n(), static_cast<std::size_t>(weights.size()));
  BalanceReport report;
  report.n = aug.n();
  report.ess = effective_sample_size(weights);
  report.weight_min = weights.minCoeff();
  report.weight_max = weights.maxCoeff();
  const double wsum = weights.sum();
  const auto names = feature_names(FeatureMap::linear, aug.p(), aug.K());
  const Eigen::MatrixXd observed = expand_features(FeatureMap::linear, aug.covariates, aug.observed);
  const Eigen::MatrixXd shifted = expand_features(FeatureMap::linear, aug.covariates, aug.shifted);
  for (Eigen::Index k = 0; k < observed.cols(); ++k) {
    const double m0 = observed.col(k).mean();
    const double m1 = shifted.col(k).mean();
    const double mw = observed.col(k).dot(weights) / wsum;
    const double v0 = (observed.col(k).array() - m0).square().sum() / static_cast<double>(std::max<Eigen::Index>(1, n - 1));
    const double v1 = (shifted.col(k).array() - m1).square().sum() / static_cast<double>(std::max<Eigen::Index>(1, n - 1));
    const double sd = std::sqrt(0.5 * (v0 + v1));
    BalanceRow row;
    row.feature = names[static_cast<std::size_t>(k)];
    row.smd_before = sd > 0.0 ? (m1 - m0) / sd : 0.0;
    row.smd_after = sd > 0.0 ? (m1 - mw) / sd : 0.0;
    report.rows.push_back(std::move(row));
  }
  return report;
}

BalanceReport balance_diagnostics(const WeightModel& model, const AugmentedDataset& aug) {
  auto report = balance_diagnostics(model.fitted.normalized, aug);
  report.cap_hits = model.fitted.hits;
  return report;
}

}  // namespace mftp

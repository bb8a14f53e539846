#include "mftp/outcome.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "mftp/glm.hpp"

namespace mftp {

namespace {

Eigen::MatrixXd design(const Eigen::MatrixXd& scores, std::size_t components, const Eigen::MatrixXd& covariates) {
  const auto km = static_cast<Eigen::Index>(components);
  Eigen::MatrixXd d(covariates.rows(), km + covariates.cols());
  if (km > 0) d.leftCols(km) = scores.leftCols(km);
  if (covariates.cols() > 0) d.rightCols(covariates.cols()) = covariates;
  return d;
}

// Coefficients on standardized columns -> original units.
Eigen::VectorXd unstandardize(double intercept, const Eigen::VectorXd& beta, const glm::Standardizer& st) {
  Eigen::VectorXd out(beta.size() + 1);
  double shift = 0.0;
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    const double b = st.constant[static_cast<std::size_t>(k)] ? 0.0 : beta(k) / st.scale(k);
    out(k + 1) = b;
    shift += b * st.center(k);
  }
  out(0) = intercept - shift;
  return out;
}

}  // namespace

std::string_view to_string(Link link) noexcept { return link == Link::logit ? "logit" : "identity"; }

OutcomeModel::OutcomeModel(std::shared_ptr<const FpcaModel> basis, std::size_t components, Eigen::VectorXd coefficients,
                           Link link, double lambda)
    : basis_(std::move(basis)), components_(components), coefficients_(std::move(coefficients)), link_(link), lambda_(lambda) {
  if (!basis_) throw Error(ErrorCategory::internal, "OutcomeModel requires a basis");
  if (components_ > basis_->J()) throw_dimension("OutcomeModel components", basis_->J(), components_);
  if (static_cast<std::size_t>(coefficients_.size()) < 1 + components_) {
    throw_dimension("OutcomeModel coefficients", 1 + components_, static_cast<std::size_t>(coefficients_.size()));
  }
  if (!(lambda_ >= 0.0)) throw Error(ErrorCategory::config, "ridge lambda must be >= 0");
}

double OutcomeModel::linear_predictor(std::span<const double> scores, std::span<const double> x) const {
  if (scores.size() < components_) throw_dimension("linear_predictor scores", components_, scores.size());
  if (x.size() != covariate_count()) throw_dimension("linear_predictor covariates", covariate_count(), x.size());
  double eta = coefficients_(0);
  for (std::size_t j = 0; j < components_; ++j) eta += coefficients_(static_cast<Eigen::Index>(1 + j)) * scores[j];
  for (std::size_t k = 0; k < x.size(); ++k) eta += coefficients_(static_cast<Eigen::Index>(1 + components_ + k)) * x[k];
  return eta;
}

double OutcomeModel::response(double eta) const { return link_ == Link::logit ? glm::logistic_fn(eta) : eta; }

OutcomeModel fit_outcome_scores(std::shared_ptr<const FpcaModel> basis, const Eigen::MatrixXd& scores,
                                std::size_t components, const Eigen::MatrixXd& covariates, const Eigen::VectorXd& y,
                                Link link, const LambdaRule& lambda) {
  const auto n = static_cast<std::size_t>(y.size());
  if (static_cast<std::size_t>(covariates.rows()) != n) throw_dimension("fit_outcome covariates", n, static_cast<std::size_t>(covariates.rows()));
  if (components > 0 && static_cast<std::size_t>(scores.rows()) != n) throw_dimension("fit_outcome scores", n, static_cast<std::size_t>(scores.rows()));
  if (static_cast<std::size_t>(scores.cols()) < components) throw_dimension("fit_outcome score columns", components, static_cast<std::size_t>(scores.cols()));
  if (n < 2) throw Error(ErrorCategory::insufficient_data, "outcome regression needs at least 2 subjects");
  if (link == Link::logit && detect_outcome_kind({y.data(), n}) != OutcomeKind::binary) {
    throw Error(ErrorCategory::config, "logit link requires a 0/1 outcome");
  }

  const Eigen::MatrixXd raw = design(scores, components, covariates);
  const auto st = glm::Standardizer::fit(raw);
  const Eigen::MatrixXd z = st.apply(raw);
  std::vector<std::string> warnings;
  if (n <= 1 + static_cast<std::size_t>(raw.cols())) {
    warnings.push_back("n=" + std::to_string(n) + " does not exceed the " + std::to_string(1 + raw.cols()) +
                       " regression coefficients");
  }

  if (link == Link::identity) {
    const auto fit = glm::ridge(z, y, lambda.kind == LambdaRule::Kind::fixed ? std::optional<double>(lambda.value)
                                                                              : std::nullopt);
    OutcomeModel model(std::move(basis), components, unstandardize(fit.intercept, fit.coefficients, st), link, fit.lambda);
    model.gcv = fit.gcv;
    model.effective_df = fit.df;
    const double tss = (y.array() - y.mean()).square().sum();
    model.r_squared = tss > 0.0 ? 1.0 - fit.rss / tss : 1.0;
    model.warnings = std::move(warnings);
    return model;
  }

  // Logit link: IRLS per lambda; GCV on the deviance when lambda is not pinned.
  std::vector<double> lambdas;
  if (lambda.kind == LambdaRule::Kind::fixed) {
    lambdas.push_back(lambda.value);
  } else {
    lambdas = glm::lambda_grid(z.squaredNorm(), n);
  }
  glm::LogisticFit best;
  double best_lambda = lambdas.front();
  double best_gcv = std::numeric_limits<double>::infinity();
  bool have_best = false;
  Eigen::VectorXd warm;
  // Largest penalty first so each fit warm-starts from a smoother solution.
  for (auto it = lambdas.rbegin(); it != lambdas.rend(); ++it) {
    auto fit = glm::logistic(z, y, *it, {}, warm.size() > 0 ? &warm : nullptr);
    if (!fit.converged) {
      if (lambdas.size() == 1) {
        std::ostringstream os;
        os << "logistic outcome IRLS did not converge in " << fit.iterations << " iterations; penalized deviance trace:";
        for (double v : fit.trace) os << " " << v;
        throw Error(ErrorCategory::fit, os.str());
      }
      continue;
    }
    warm = fit.beta;
    const double denom = static_cast<double>(n) - fit.df;
    const double gcv = denom > 0.0 ? static_cast<double>(n) * fit.deviance / (denom * denom)
                                   : std::numeric_limits<double>::infinity();
    if (!have_best || gcv < best_gcv) {
      best_gcv = gcv;
      best = std::move(fit);
      best_lambda = *it;
      have_best = true;
    }
  }
  if (!have_best) throw Error(ErrorCategory::fit, "logistic outcome IRLS did not converge for any lambda on the grid");
  const Eigen::VectorXd slopes = best.beta.tail(best.beta.size() - 1);
  OutcomeModel model(std::move(basis), components, unstandardize(best.beta(0), slopes, st), link, best_lambda);
  model.gcv = best_gcv;
  model.effective_df = best.df;
  model.iterations = best.iterations;
  model.warnings = std::move(warnings);
  return model;
}

OutcomeModel fit_outcome(const Dataset& data, std::shared_ptr<const FpcaModel> basis, const OutcomeOptions& options) {
  if (!basis) throw Error(ErrorCategory::internal, "fit_outcome requires a basis");
  if (!(basis->grid() == data.grid())) throw Error(ErrorCategory::dimension, "fit_outcome: basis and data grids differ");
  const std::size_t km = options.components.value_or(basis->K());
  const Link link = options.link.value_or(data.outcome_kind() == OutcomeKind::binary ? Link::logit : Link::identity);
  Eigen::MatrixXd scores(static_cast<Eigen::Index>(data.n()), 0);
  if (km > 0) scores = project_scores(*basis, data.curves(), km).scores;
  return fit_outcome_scores(std::move(basis), scores, km, data.covariates(), data.outcomes(), link, options.lambda);
}

double predict_m(const OutcomeModel& model, std::span<const double> x, std::span<const double> curve) {
  if (curve.size() != model.basis().grid().size()) throw_dimension("predict_m curve", model.basis().grid().size(), curve.size());
  Eigen::VectorXd scores(0);
  if (model.components() > 0) scores = project_curve(model.basis(), curve, model.components());
  return model.response(model.linear_predictor({scores.data(), static_cast<std::size_t>(scores.size())}, x));
}

Eigen::VectorXd predict_from_scores(const OutcomeModel& model, const Eigen::MatrixXd& scores,
                                    const Eigen::MatrixXd& covariates) {
  const auto km = static_cast<Eigen::Index>(model.components());
  if (covariates.cols() != static_cast<Eigen::Index>(model.covariate_count())) {
    throw_dimension("predict covariates", model.covariate_count(), static_cast<std::size_t>(covariates.cols()));
  }
  if (km > 0 && (scores.cols() < km || scores.rows() != covariates.rows())) {
    throw_dimension("predict scores", static_cast<std::size_t>(km), static_cast<std::size_t>(scores.cols()));
  }
  const auto& c = model.coefficients();
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(covariates.rows(), c(0));
  if (km > 0) eta.noalias() += scores.leftCols(km) * c.segment(1, km);
  if (covariates.cols() > 0) eta.noalias() += covariates * c.tail(covariates.cols());
  if (model.link() == Link::logit) {
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = glm::logistic_fn(eta(i));
  }
  return eta;
}

double lipschitz_constant(const OutcomeModel& model) {
  double s = 0.0;
  for (std::size_t j = 0; j < model.components(); ++j) {
    const double b = model.coefficients()(static_cast<Eigen::Index>(1 + j));
    s += b * b / model.basis().eigenvalues()(static_cast<Eigen::Index>(j));
  }
  const double l = std::sqrt(s);
  return model.link() == Link::logit ? 0.25 * l : l;
}

}  // namespace mftp

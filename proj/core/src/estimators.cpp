#include "mftp/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mftp/parallel.hpp"
#include "mftp/random.hpp"
#include "mftp/stats.hpp"

namespace mftp {

namespace {

std::span<const double> as_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

MftpEstimate base_estimate(EstimatorKind kind, const PreparedData& prep) {
  MftpEstimate e;
  e.estimator = kind;
  e.n = prep.n();
  e.K = prep.K;
  e.K_m = prep.K_m;
  if (prep.basis && prep.K <= prep.basis->J()) e.diagnostics.tail_residual = tail_residual(*prep.basis, prep.K);
  return e;
}

void fill_weight_diagnostics(EstimateDiagnostics& d, const Eigen::VectorXd& w, std::size_t hits, bool separation) {
  d.weight_min = w.minCoeff();
  d.weight_max = w.maxCoeff();
  d.ess = effective_sample_size(w);
  d.cap_hits = hits;
  d.separation = separation;
}

struct FoldNuisances {
  Eigen::VectorXd m_observed;
  Eigen::VectorXd m_shifted;
  Eigen::VectorXd weights;
  std::size_t hits = 0;
  bool separation = false;
};

FoldNuisances fold_nuisances(const PreparedData& train, const PreparedData& test, const PipelineSpec& spec) {
  const auto outcome = fit_outcome(train, spec);
  const auto weights = fit_weights(train, spec);
  FoldNuisances f;
  f.m_observed = predict_from_scores(outcome, test.observed, test.covariates);
  f.m_shifted = predict_from_scores(outcome, test.shifted, test.covariates);
  const auto capped = weights.weights_for(test.covariates, test.observed);
  f.weights = capped.normalized;
  f.hits = capped.hits;
  f.separation = weights.separation;
  return f;
}

std::vector<std::size_t> complement(const std::vector<std::size_t>& fold_of, std::size_t fold, bool inside) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if ((fold_of[i] == fold) == inside) rows.push_back(i);
  }
  return rows;
}

void check_folds(std::size_t n, std::size_t folds) {
  if (folds < 2 || folds > 10) throw Error(ErrorCategory::config, "folds must lie in [2, 10]");
  if (n < 2 * folds) {
    throw Error(ErrorCategory::insufficient_data,
                "cross-fitting with " + std::to_string(folds) + " folds needs at least " + std::to_string(2 * folds) +
                    " subjects, got " + std::to_string(n));
  }
}

MftpEstimate combine_aipw(const Eigen::VectorXd& y, AipwParts& parts) {
  parts.contributions = parts.m_shifted + (y - parts.m_observed).cwiseProduct(parts.weights);
  MftpEstimate e;
  e.estimator = EstimatorKind::AIPW;
  e.n = static_cast<std::size_t>(y.size());
  e.point = parts.contributions.mean();
  e.diagnostics.plugin_se = std::sqrt(stats::variance(as_span(parts.contributions)) / static_cast<double>(y.size()));
  return e;
}

bool degenerate_resample(const PreparedData& sub) {
  if (sub.n() < 2) return true;
  for (Eigen::Index i = 1; i < sub.observed.rows(); ++i) {
    if (sub.observed.row(i) != sub.observed.row(0)) return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(EstimatorKind kind) noexcept {
  switch (kind) {
    case EstimatorKind::OR: return "OR";
    case EstimatorKind::IPW_hajek: return "IPW_hajek";
    case EstimatorKind::IPW_plain: return "IPW_plain";
    case EstimatorKind::AIPW: return "AIPW";
  }
  return "AIPW";
}

EstimatorKind estimator_from_string(std::string_view name) {
  for (auto k : kAllEstimators) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCategory::config, "unknown estimator '" + std::string(name) + "' (OR, IPW_hajek, IPW_plain, AIPW)");
}

PreparedData PreparedData::subset(std::span<const std::size_t> rows) const {
  PreparedData out;
  out.basis = basis;
  out.K = K;
  out.K_m = K_m;
  out.link = link;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.observed.resize(m, observed.cols());
  out.shifted.resize(m, shifted.cols());
  out.covariates.resize(m, covariates.cols());
  out.y.resize(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
    if (i >= y.size()) throw Error(ErrorCategory::dimension, "subset row " + std::to_string(i) + " out of range");
    out.observed.row(r) = observed.row(i);
    out.shifted.row(r) = shifted.row(i);
    out.covariates.row(r) = covariates.row(i);
    out.y(r) = y(i);
  }
  return out;
}

PreparedData prepare(const Dataset& data, const ModificationPolicy& policy, const PipelineSpec& spec,
                     std::shared_ptr<const FpcaModel> basis) {
  if (!basis) basis = std::make_shared<const FpcaModel>(fit_fpca(data, spec.basis_rule));
  if (!(basis->grid() == data.grid())) throw Error(ErrorCategory::dimension, "prepare: basis and data grids differ");
  PreparedData prep;
  prep.K = spec.K;
  prep.K_m = spec.K_m.value_or(basis->K());
  const std::size_t used = std::max(prep.K, prep.K_m);
  if (used > basis->J()) {
    throw Error(ErrorCategory::insufficient_data, "requested " + std::to_string(used) + " components but the basis has only " +
                                                      std::to_string(basis->J()) + " above the eigen-floor");
  }
  prep.link = spec.link.value_or(data.outcome_kind() == OutcomeKind::binary ? Link::logit : Link::identity);
  prep.covariates = data.covariates();
  prep.y = data.outcomes();
  if (used > 0) {
    prep.observed = project_scores(*basis, data.curves(), used).scores;
    const CurveMatrix shifted = apply_policy(policy, data.grid(), data.curves(), &data.covariates());
    prep.shifted = project_scores(*basis, shifted, used).scores;
  } else {
    prep.observed.resize(static_cast<Eigen::Index>(data.n()), 0);
    prep.shifted.resize(static_cast<Eigen::Index>(data.n()), 0);
  }
  prep.basis = std::move(basis);
  return prep;
}

OutcomeModel fit_outcome(const PreparedData& prep, const PipelineSpec& spec) {
  return fit_outcome_scores(prep.basis, prep.observed, prep.K_m, prep.covariates, prep.y, prep.link, spec.lambda);
}

WeightModel fit_weights(const PreparedData& prep, const PipelineSpec& spec) {
  return fit_weight_model(build_augmented(prep.covariates, prep.observed, prep.shifted, prep.K), spec.weights);
}

MftpEstimate estimate_or(const PreparedData& prep, const OutcomeModel& model) {
  auto e = base_estimate(EstimatorKind::OR, prep);
  e.point = predict_from_scores(model, prep.shifted, prep.covariates).mean();
  e.K_m = model.components();
  e.diagnostics.warnings = model.warnings;
  return e;
}

MftpEstimate estimate_or(const Dataset& data, const ModificationPolicy& policy, const OutcomeModel& model) {
  if (data.p() != model.covariate_count()) throw_dimension("estimate_or covariates", model.covariate_count(), data.p());
  double sum = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto s = data.sample(i);
    sum += predict_m(model, s.covariates, apply_policy(policy, data.grid(), s));
  }
  MftpEstimate e;
  e.estimator = EstimatorKind::OR;
  e.n = data.n();
  e.K_m = model.components();
  e.point = sum / static_cast<double>(data.n());
  return e;
}

double ipw_mean(const Eigen::VectorXd& y, const Eigen::VectorXd& weights, IpwMode mode) {
  if (y.size() != weights.size()) throw_dimension("ipw weights", static_cast<std::size_t>(y.size()), static_cast<std::size_t>(weights.size()));
  if (y.size() == 0) throw Error(ErrorCategory::estimate, "IPW on an empty sample");
  if (mode == IpwMode::plain) return y.dot(weights) / static_cast<double>(y.size());
  const double total = weights.sum();
  if (!(total != 0.0) || !std::isfinite(total)) throw Error(ErrorCategory::estimate, "sum of weights is zero; Hajek estimate undefined");
  return y.dot(weights) / total;
}

MftpEstimate estimate_ipw(const PreparedData& prep, const WeightModel& model, IpwMode mode) {
  auto e = base_estimate(mode == IpwMode::hajek ? EstimatorKind::IPW_hajek : EstimatorKind::IPW_plain, prep);
  const Eigen::VectorXd& w = mode == IpwMode::hajek ? model.fitted.normalized : model.fitted.capped;
  e.point = ipw_mean(prep.y, w, mode);
  fill_weight_diagnostics(e.diagnostics, w, model.fitted.hits, model.separation);
  e.diagnostics.warnings = model.warnings;
  return e;
}

std::vector<std::size_t> assign_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(derive_seed(seed, {tag("folds")}));
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::size_t> fold_of(n);
  for (std::size_t r = 0; r < n; ++r) fold_of[order[r]] = r % folds;
  return fold_of;
}

MftpEstimate estimate_aipw(const PreparedData& prep, const PipelineSpec& spec, AipwParts* parts_out) {
  const std::size_t n = prep.n();
  check_folds(n, spec.folds);
  AipwParts parts;
  parts.fold_of = assign_folds(n, spec.folds, spec.seed);
  parts.m_observed.resize(static_cast<Eigen::Index>(n));
  parts.m_shifted.resize(static_cast<Eigen::Index>(n));
  parts.weights.resize(static_cast<Eigen::Index>(n));
  std::size_t hits = 0;
  bool separation = false;
  for (std::size_t fold = 0; fold < spec.folds; ++fold) {
    const auto test_rows = complement(parts.fold_of, fold, true);
    const auto train_rows = complement(parts.fold_of, fold, false);
    FoldNuisances f;
    try {
      f = fold_nuisances(prep.subset(train_rows), prep.subset(test_rows), spec);
    } catch (const Error& err) {
      throw Error(err.category(), "fold " + std::to_string(fold + 1) + " of " + std::to_string(spec.folds) + ": " + err.what());
    }
    for (std::size_t r = 0; r < test_rows.size(); ++r) {
      const auto i = static_cast<Eigen::Index>(test_rows[r]);
      const auto k = static_cast<Eigen::Index>(r);
      parts.m_observed(i) = f.m_observed(k);
      parts.m_shifted(i) = f.m_shifted(k);
      parts.weights(i) = f.weights(k);
    }
    hits += f.hits;
    separation = separation || f.separation;
  }
  auto core = combine_aipw(prep.y, parts);
  auto e = base_estimate(EstimatorKind::AIPW, prep);
  e.point = core.point;
  e.folds = spec.folds;
  e.diagnostics.plugin_se = core.diagnostics.plugin_se;
  fill_weight_diagnostics(e.diagnostics, parts.weights, hits, separation);
  if (parts_out != nullptr) *parts_out = std::move(parts);
  return e;
}

MftpEstimate estimate_aipw(const Dataset& data, const ModificationPolicy& policy, const PipelineSpec& spec) {
  if (!spec.per_fold_fpca) return estimate_aipw(prepare(data, policy, spec), spec);
  // The basis itself is refit on each training complement.
  const std::size_t n = data.n();
  check_folds(n, spec.folds);
  AipwParts parts;
  parts.fold_of = assign_folds(n, spec.folds, spec.seed);
  parts.m_observed.resize(static_cast<Eigen::Index>(n));
  parts.m_shifted.resize(static_cast<Eigen::Index>(n));
  parts.weights.resize(static_cast<Eigen::Index>(n));
  std::size_t hits = 0;
  for (std::size_t fold = 0; fold < spec.folds; ++fold) {
    const auto test_rows = complement(parts.fold_of, fold, true);
    const auto train_rows = complement(parts.fold_of, fold, false);
    FoldNuisances f;
    try {
      const Dataset train = data.subset(train_rows);
      auto basis = std::make_shared<const FpcaModel>(fit_fpca(train, spec.basis_rule));
      const auto train_prep = prepare(train, policy, spec, basis);
      const auto test_prep = prepare(data.subset(test_rows), policy, spec, basis);
      f = fold_nuisances(train_prep, test_prep, spec);
    } catch (const Error& err) {
      throw Error(err.category(), "fold " + std::to_string(fold + 1) + " of " + std::to_string(spec.folds) + ": " + err.what());
    }
    for (std::size_t r = 0; r < test_rows.size(); ++r) {
      const auto i = static_cast<Eigen::Index>(test_rows[r]);
      parts.m_observed(i) = f.m_observed(static_cast<Eigen::Index>(r));
      parts.m_shifted(i) = f.m_shifted(static_cast<Eigen::Index>(r));
      parts.weights(i) = f.weights(static_cast<Eigen::Index>(r));
    }
    hits += f.hits;
  }
  auto e = combine_aipw(data.outcomes(), parts);
  e.K = spec.K;
  e.folds = spec.folds;
  fill_weight_diagnostics(e.diagnostics, parts.weights, hits, false);
  return e;
}

MftpEstimate aipw_from_nuisances(const Eigen::VectorXd& y, const Eigen::VectorXd& m_observed,
                                 const Eigen::VectorXd& m_shifted, const Eigen::VectorXd& weights) {
  const auto n = static_cast<std::size_t>(y.size());
  for (const auto* v : {&m_observed, &m_shifted, &weights}) {
    if (static_cast<std::size_t>(v->size()) != n) throw_dimension("aipw nuisances", n, static_cast<std::size_t>(v->size()));
  }
  if (n == 0) throw Error(ErrorCategory::estimate, "AIPW on an empty sample");
  AipwParts parts;
  parts.m_observed = m_observed;
  parts.m_shifted = m_shifted;
  parts.weights = weights;
  auto e = combine_aipw(y, parts);
  fill_weight_diagnostics(e.diagnostics, weights, 0, false);
  return e;
}

std::vector<double> point_estimates(const PreparedData& prep, const PipelineSpec& spec,
                                    std::span<const EstimatorKind> kinds) {
  std::optional<OutcomeModel> outcome;
  std::optional<WeightModel> weights;
  std::vector<double> out;
  for (auto kind : kinds) {
    switch (kind) {
      case EstimatorKind::OR:
        if (!outcome) outcome.emplace(fit_outcome(prep, spec));
        out.push_back(estimate_or(prep, *outcome).point);
        break;
      case EstimatorKind::IPW_hajek:
      case EstimatorKind::IPW_plain:
        if (!weights) weights.emplace(fit_weights(prep, spec));
        out.push_back(estimate_ipw(prep, *weights, kind == EstimatorKind::IPW_hajek ? IpwMode::hajek : IpwMode::plain).point);
        break;
      case EstimatorKind::AIPW:
        out.push_back(estimate_aipw(prep, spec).point);
        break;
    }
  }
  return out;
}

Interval percentile_interval(std::span<const double> draws, double alpha) {
  if (draws.empty()) throw Error(ErrorCategory::estimate, "no bootstrap draws");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCategory::config, "alpha must lie in (0, 1)");
  return {stats::quantile(draws, alpha / 2.0), stats::quantile(draws, 1.0 - alpha / 2.0)};
}

BootstrapResult bootstrap(const PreparedData& prep, const PipelineSpec& spec, std::span<const EstimatorKind> kinds,
                          const Dataset* data, const ModificationPolicy* policy) {
  const std::size_t B = spec.bootstrap_B;
  if (B < 100) throw Error(ErrorCategory::config, "bootstrap needs B >= 100, got " + std::to_string(B));
  if (spec.refit_fpca_in_bootstrap && (data == nullptr || policy == nullptr)) {
    throw Error(ErrorCategory::internal, "bootstrap with FPCA refit needs the dataset and policy");
  }
  const std::size_t n = prep.n();
  std::vector<std::optional<std::vector<double>>> slots(B);
  parallel_for(B, spec.threads, [&](std::size_t b) {
    auto rng = make_rng(derive_seed(spec.seed, {tag("bootstrap"), b}));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = pick(rng);
    PipelineSpec inner = spec;
    inner.seed = derive_seed(spec.seed, {tag("bootstrap-folds"), b});
    inner.threads = 1;
    try {
      if (spec.refit_fpca_in_bootstrap) {
        const Dataset sub = data->subset(rows);
        slots[b] = point_estimates(prepare(sub, *policy, inner), inner, kinds);
      } else {
        const auto sub = prep.subset(rows);
        if (degenerate_resample(sub)) return;
        slots[b] = point_estimates(sub, inner, kinds);
      }
    } catch (const Error& err) {
      switch (err.category()) {
        case ErrorCategory::fit:
        case ErrorCategory::numeric:
        case ErrorCategory::insufficient_data:
        case ErrorCategory::estimate:
          return;  // counted as skipped
        default:
          throw;
      }
    }
  });
  BootstrapResult result;
  result.requested = B;
  result.draws.assign(kinds.size(), {});
  for (const auto& slot : slots) {
    if (!slot) {
      ++result.skipped;
      continue;
    }
    for (std::size_t k = 0; k < kinds.size(); ++k) result.draws[k].push_back((*slot)[k]);
  }
  if (result.skipped * 20 > B) {
    std::ostringstream os;
    os << result.skipped << " of " << B << " bootstrap resamples were skipped (more than 5%); intervals may be unreliable";
    result.warnings.push_back(os.str());
  }
  if (result.skipped == B) throw Error(ErrorCategory::estimate, "every bootstrap resample was skipped");
  for (std::size_t k = 0; k < kinds.size(); ++k) result.intervals.push_back(percentile_interval(result.draws[k], spec.alpha));
  return result;
}

std::vector<MftpEstimate> estimate_all(const Dataset& data, const ModificationPolicy& policy, const PipelineSpec& spec,
                                       std::shared_ptr<const FpcaModel> basis) {
  const auto prep = prepare(data, policy, spec, std::move(basis));
  const auto outcome = fit_outcome(prep, spec);
  const auto weights = fit_weights(prep, spec);
  std::vector<MftpEstimate> out;
  out.push_back(estimate_or(prep, outcome));
  out.push_back(estimate_ipw(prep, weights, IpwMode::hajek));
  out.push_back(estimate_ipw(prep, weights, IpwMode::plain));
  out.push_back(estimate_aipw(prep, spec));
  for (auto& e : out) {
    e.alpha = spec.alpha;
    e.K_m = prep.K_m;
  }
  if (spec.bootstrap_B > 0) {
    const auto boot = bootstrap(prep, spec, kAllEstimators, &data, &policy);
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k].ci = boot.intervals[k];
      out[k].bootstrap_B = spec.bootstrap_B;
      out[k].diagnostics.bootstrap_skipped = boot.skipped;
      for (const auto& w : boot.warnings) out[k].diagnostics.warnings.push_back(w);
    }
  }
  return out;
}

}  // namespace mftp

#include "mftp/fgrid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mftp {

namespace {

void check_points(const std::vector<double>& points) {
  if (points.size() < 2) throw Error(ErrorCategory::validation, "time grid needs at least 2 points");
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (!std::isfinite(points[j])) throw Error(ErrorCategory::validation, "time grid contains a non-finite point");
    if (j > 0 && !(points[j] > points[j - 1])) {
      throw Error(ErrorCategory::validation,
                  "time grid is not strictly increasing at index " + std::to_string(j));
    }
  }
}

std::string summarize(const std::vector<Violation>& violations) {
  std::ostringstream os;
  os << violations.size() << " validation error(s)";
  const std::size_t shown = std::min<std::size_t>(violations.size(), 5);
  for (std::size_t k = 0; k < shown; ++k) {
    const auto& v = violations[k];
    os << "; row " << v.row;
    if (v.line != 0) os << " (line " << v.line << ")";
    os << " field " << v.field << ": " << v.message;
  }
  if (violations.size() > shown) os << "; ...";
  return os.str();
}

}  // namespace

TimeGrid::TimeGrid(std::vector<double> points)
    : TimeGrid(points, points.empty() ? 0.0 : points.front(), points.empty() ? 1.0 : points.back()) {}

TimeGrid::TimeGrid(std::vector<double> points, double domain_lo, double domain_hi)
    : original_(std::move(points)), lo_(domain_lo), hi_(domain_hi) {
  check_points(original_);
  if (!(hi_ > lo_) || original_.front() < lo_ || original_.back() > hi_) {
    throw Error(ErrorCategory::validation, "time grid domain must contain all points and have positive length");
  }
  normalized_.resize(original_.size());
  for (std::size_t j = 0; j < original_.size(); ++j) normalized_[j] = normalize(original_[j]);
  normalized_.front() = std::max(0.0, normalized_.front());
  normalized_.back() = std::min(1.0, normalized_.back());
  if (original_.front() == lo_) normalized_.front() = 0.0;
  if (original_.back() == hi_) normalized_.back() = 1.0;

  weights_.assign(normalized_.size(), 0.0);
  for (std::size_t j = 0; j + 1 < normalized_.size(); ++j) {
    const double h = 0.5 * (normalized_[j + 1] - normalized_[j]);
    weights_[j] += h;
    weights_[j + 1] += h;
  }
}

TimeGrid TimeGrid::uniform(std::size_t T) {
  if (T < 2) throw Error(ErrorCategory::validation, "time grid needs at least 2 points");
  std::vector<double> pts(T);
  for (std::size_t j = 0; j < T; ++j) pts[j] = static_cast<double>(j) / static_cast<double>(T - 1);
  return TimeGrid(std::move(pts), 0.0, 1.0);
}

double inner_product(std::span<const double> f, std::span<const double> g, const TimeGrid& grid) {
  if (f.size() != grid.size()) throw_dimension("inner_product: f", grid.size(), f.size());
  if (g.size() != grid.size()) throw_dimension("inner_product: g", grid.size(), g.size());
  const auto w = grid.weights();
  double s = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) s += w[j] * f[j] * g[j];
  return s;
}

double integral(std::span<const double> f, const TimeGrid& grid) {
  if (f.size() != grid.size()) throw_dimension("integral", grid.size(), f.size());
  const auto w = grid.weights();
  double s = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) s += w[j] * f[j];
  return s;
}

double l2_norm(std::span<const double> f, const TimeGrid& grid) {
  return std::sqrt(inner_product(f, f, grid));
}

double l2_distance(std::span<const double> f, std::span<const double> g, const TimeGrid& grid) {
  if (f.size() != grid.size()) throw_dimension("l2_distance: f", grid.size(), f.size());
  if (g.size() != grid.size()) throw_dimension("l2_distance: g", grid.size(), g.size());
  const auto w = grid.weights();
  double s = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double d = f[j] - g[j];
    s += w[j] * d * d;
  }
  return std::sqrt(s);
}

double interpolate(std::span<const double> f, const TimeGrid& grid, double u) {
  if (f.size() != grid.size()) throw_dimension("interpolate", grid.size(), f.size());
  const auto t = grid.points();
  if (u <= t.front()) return f.front();
  if (u >= t.back()) return f.back();
  const auto it = std::upper_bound(t.begin(), t.end(), u);
  const auto hi = static_cast<std::size_t>(it - t.begin());
  const std::size_t lo = hi - 1;
  const double frac = (u - t[lo]) / (t[hi] - t[lo]);
  return f[lo] + frac * (f[hi] - f[lo]);
}

std::string_view to_string(OutcomeKind kind) noexcept {
  return kind == OutcomeKind::binary ? "binary" : "continuous";
}

OutcomeKind detect_outcome_kind(std::span<const double> outcomes) noexcept {
  if (outcomes.empty()) return OutcomeKind::continuous;
  for (double y : outcomes) {
    if (y != 0.0 && y != 1.0) return OutcomeKind::continuous;
  }
  return OutcomeKind::binary;
}

Dataset::Dataset(TimeGrid grid, CurveMatrix curves, Eigen::MatrixXd covariates, Eigen::VectorXd outcomes,
                 OutcomeKind kind, std::vector<std::string> ids)
    : grid_(std::move(grid)),
      curves_(std::move(curves)),
      covariates_(std::move(covariates)),
      outcomes_(std::move(outcomes)),
      kind_(kind),
      ids_(std::move(ids)) {
  const auto n = static_cast<std::size_t>(curves_.rows());
  if (static_cast<std::size_t>(curves_.cols()) != grid_.size()) {
    throw_dimension("Dataset curves (columns)", grid_.size(), static_cast<std::size_t>(curves_.cols()));
  }
  if (static_cast<std::size_t>(covariates_.rows()) != n) {
    throw_dimension("Dataset covariates (rows)", n, static_cast<std::size_t>(covariates_.rows()));
  }
  if (static_cast<std::size_t>(outcomes_.size()) != n) {
    throw_dimension("Dataset outcomes", n, static_cast<std::size_t>(outcomes_.size()));
  }
  if (!ids_.empty() && ids_.size() != n) throw_dimension("Dataset ids", n, ids_.size());
}

FunctionalSample Dataset::sample(std::size_t i) const {
  FunctionalSample s;
  const auto c = curve(i);
  s.values.assign(c.begin(), c.end());
  s.covariates.resize(p());
  for (std::size_t k = 0; k < p(); ++k) s.covariates[k] = covariates_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  s.outcome = outcomes_(static_cast<Eigen::Index>(i));
  return s;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  CurveMatrix c(m, curves_.cols());
  Eigen::MatrixXd x(m, covariates_.cols());
  Eigen::VectorXd y(m);
  std::vector<std::string> ids;
  if (!ids_.empty()) ids.reserve(rows.size());
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
    c.row(r) = curves_.row(i);
    x.row(r) = covariates_.row(i);
    y(r) = outcomes_(i);
    if (!ids_.empty()) ids.push_back(ids_[static_cast<std::size_t>(i)]);
  }
  return Dataset(grid_, std::move(c), std::move(x), std::move(y), kind_, std::move(ids));
}

ValidationError::ValidationError(std::vector<Violation> violations)
    : Error(ErrorCategory::validation, summarize(violations)), violations_(std::move(violations)) {}

Dataset validate_dataset(const TimeGrid& grid, std::span<const RawRow> rows,
                         std::optional<OutcomeKind> outcome_kind) {
  std::vector<Violation> violations;
  if (rows.empty()) {
    violations.push_back({0, 0, "rows", "no data rows"});
    throw ValidationError(std::move(violations));
  }
  const std::size_t T = grid.size();
  const std::size_t p = rows.front().covariates.size();

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const RawRow& row = rows[r];
    const std::size_t idx = r + 1;
    if (row.values.size() != T) {
      violations.push_back({idx, row.line, "A",
                            "grid mismatch: " + std::to_string(row.values.size()) + " values for a grid of " +
                                std::to_string(T) + " points"});
    }
    if (row.covariates.size() != p) {
      violations.push_back({idx, row.line, "X",
                            "covariate-length mismatch: " + std::to_string(row.covariates.size()) + " vs " +
                                std::to_string(p)});
    }
    if (!std::isfinite(row.outcome)) violations.push_back({idx, row.line, "Y", "outcome is not finite"});
    for (std::size_t k = 0; k < row.covariates.size(); ++k) {
      if (!std::isfinite(row.covariates[k])) {
        violations.push_back({idx, row.line, "X_" + std::to_string(k + 1), "covariate is not finite"});
      }
    }
    for (std::size_t j = 0; j < row.values.size(); ++j) {
      if (!std::isfinite(row.values[j])) {
        violations.push_back({idx, row.line, "A[" + std::to_string(j + 1) + "]", "curve value is not finite"});
      }
    }
  }
  if (!violations.empty()) throw ValidationError(std::move(violations));

  const auto n = static_cast<Eigen::Index>(rows.size());
  CurveMatrix curves(n, static_cast<Eigen::Index>(T));
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(p));
  Eigen::VectorXd y(n);
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const RawRow& row = rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < T; ++j) curves(i, static_cast<Eigen::Index>(j)) = row.values[j];
    for (std::size_t k = 0; k < p; ++k) x(i, static_cast<Eigen::Index>(k)) = row.covariates[k];
    y(i) = row.outcome;
    ids.push_back(row.id.empty() ? std::to_string(i + 1) : row.id);
  }
  const OutcomeKind kind = outcome_kind.value_or(detect_outcome_kind({y.data(), static_cast<std::size_t>(y.size())}));
  return Dataset(grid, std::move(curves), std::move(x), std::move(y), kind, std::move(ids));
}

}  // namespace mftp

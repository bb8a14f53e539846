#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mftp/error.hpp"

namespace mftp {

// n x T matrix, one curve per row. Row-major so a curve is a contiguous span.
using CurveMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> row_span(const CurveMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

/// Strictly increasing observation times with an affine map onto [0, 1].
///
/// By default the domain is [first point, last point]. A wider domain can be
/// given, e.g. [0, 1440] minutes for a clock-time grid covering one day, in
/// which case normalized points need not touch 0 or 1. Trapezoid weights are
/// computed on the normalized points; all downstream integrals use them.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> points);
  TimeGrid(std::vector<double> points, double domain_lo, double domain_hi);

  /// T equally spaced points covering [0, 1] (endpoints included).
  static TimeGrid uniform(std::size_t T);

  std::size_t size() const noexcept { return normalized_.size(); }
  std::span<const double> points() const noexcept { return normalized_; }
  std::span<const double> original() const noexcept { return original_; }
  std::span<const double> weights() const noexcept { return weights_; }
  double domain_lo() const noexcept { return lo_; }
  double domain_hi() const noexcept { return hi_; }

  double normalize(double t) const noexcept { return (t - lo_) / (hi_ - lo_); }
  double denormalize(double u) const noexcept { return lo_ + u * (hi_ - lo_); }

  /// Bit-equality of normalized points.
  bool operator==(const TimeGrid& other) const noexcept { return normalized_ == other.normalized_; }

 private:
  std::vector<double> original_;
  std::vector<double> normalized_;
  std::vector<double> weights_;
  double lo_ = 0.0;
  double hi_ = 1.0;
};

// <f, g> by the trapezoid rule on the normalized grid.
double inner_product(std::span<const double> f, std::span<const double> g, const TimeGrid& grid);
double integral(std::span<const double> f, const TimeGrid& grid);
double l2_norm(std::span<const double> f, const TimeGrid& grid);
double l2_distance(std::span<const double> f, std::span<const double> g, const TimeGrid& grid);

// Linear interpolation of a gridded curve at normalized time u, clamped to the grid range.
double interpolate(std::span<const double> f, const TimeGrid& grid, double u);

enum class OutcomeKind { continuous, binary };

std::string_view to_string(OutcomeKind kind) noexcept;

/// binary iff every value is exactly 0 or 1.
OutcomeKind detect_outcome_kind(std::span<const double> outcomes) noexcept;

struct FunctionalSample {
  std::vector<double> values;
  std::vector<double> covariates;
  double outcome = 0.0;
};

class Dataset {
 public:
  Dataset(TimeGrid grid, CurveMatrix curves, Eigen::MatrixXd covariates, Eigen::VectorXd outcomes,
          OutcomeKind kind, std::vector<std::string> ids = {});

  std::size_t n() const noexcept { return static_cast<std::size_t>(curves_.rows()); }
  std::size_t T() const noexcept { return grid_.size(); }
  std::size_t p() const noexcept { return static_cast<std::size_t>(covariates_.cols()); }

  const TimeGrid& grid() const noexcept { return grid_; }
  const CurveMatrix& curves() const noexcept { return curves_; }
  const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
  const Eigen::VectorXd& outcomes() const noexcept { return outcomes_; }
  OutcomeKind outcome_kind() const noexcept { return kind_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  std::span<const double> curve(std::size_t i) const { return row_span(curves_, static_cast<Eigen::Index>(i)); }
  FunctionalSample sample(std::size_t i) const;

  Dataset subset(std::span<const std::size_t> rows) const;

 private:
  TimeGrid grid_;
  CurveMatrix curves_;
  Eigen::MatrixXd covariates_;
  Eigen::VectorXd outcomes_;
  OutcomeKind kind_;
  std::vector<std::string> ids_;
};

/// One parsed input row before validation. `line` is the 1-based source line
/// used in error messages.
struct RawRow {
  std::size_t line = 0;
  std::string id;
  double outcome = 0.0;
  std::vector<double> covariates;
  std::vector<double> values;
};

struct Violation {
  std::size_t row = 0;  // 1-based row index within the input rows
  std::size_t line = 0;
  std::string field;
  std::string message;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

/// Checks every row against the shared grid and the first row's covariate
/// count, then assembles a Dataset. All violations are collected before
/// throwing ValidationError.
Dataset validate_dataset(const TimeGrid& grid, std::span<const RawRow> rows,
                         std::optional<OutcomeKind> outcome_kind = std::nullopt);

}  // namespace mftp

#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mftp/fgrid.hpp"

namespace mftp {

/// How many principal components to keep.
struct KRule {
  enum class Kind { fixed, variance_fraction };
  Kind kind = Kind::variance_fraction;
  std::size_t k = 0;
  double fraction = 0.95;

  static KRule fixed(std::size_t k) { return {Kind::fixed, k, 0.0}; }
  static KRule variance_fraction(double rho = 0.95) { return {Kind::variance_fraction, 0, rho}; }
};

/// Mean function, retained spectrum and eigenfunctions of a set of curves.
///
/// Eigenfunctions are stored as columns of a T x J matrix and are orthonormal
/// under the grid's trapezoid inner product. Only eigenpairs above the
/// eigen-floor max(1e-10, 1e-8 * theta_1) are kept, so J can be smaller than
/// min(n, T). K <= J is the truncation used by default for projections.
class FpcaModel {
 public:
  FpcaModel(TimeGrid grid, Eigen::VectorXd mean, Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenfunctions,
            std::size_t K, double discarded_variance = 0.0);

  const TimeGrid& grid() const noexcept { return grid_; }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
  const Eigen::MatrixXd& eigenfunctions() const noexcept { return eigenfunctions_; }
  std::size_t K() const noexcept { return K_; }
  std::size_t J() const noexcept { return static_cast<std::size_t>(eigenvalues_.size()); }
  double total_variance() const noexcept { return eigenvalues_.sum(); }
  // Variance in eigenpairs dropped by the eigen-floor (not part of the tail residual).
  double discarded_variance() const noexcept { return discarded_variance_; }

  /// Copy with a different default truncation.
  FpcaModel with_K(std::size_t K) const;

 private:
  TimeGrid grid_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd eigenfunctions_;
  std::size_t K_ = 0;
  double discarded_variance_ = 0.0;
};

/// Standardized scores: entry (i, j) = <curve_i - mean, psi_j> / sqrt(theta_j).
struct ScoreMatrix {
  Eigen::MatrixXd scores;
  bool standardized = true;
};

std::size_t select_k(const Eigen::VectorXd& eigenvalues, const KRule& rule);

FpcaModel fit_fpca(const TimeGrid& grid, const CurveMatrix& curves, const KRule& rule = KRule::variance_fraction());
FpcaModel fit_fpca(const Dataset& data, const KRule& rule = KRule::variance_fraction());

/// Projects onto the first `components` eigenfunctions (default: model.K()).
ScoreMatrix project_scores(const FpcaModel& model, const CurveMatrix& curves,
                           std::optional<std::size_t> components = std::nullopt);
Eigen::VectorXd project_curve(const FpcaModel& model, std::span<const double> curve,
                              std::optional<std::size_t> components = std::nullopt);

/// mean + sum_j sqrt(theta_j) * scores_j * psi_j over the given scores (length <= J).
Eigen::VectorXd reconstruct(const FpcaModel& model, const Eigen::VectorXd& scores);

/// Sum of estimated eigenvalues beyond the first K.
double tail_residual(const FpcaModel& model, std::size_t K);

enum class DecayLaw { exponential, polynomial, finite_rank };

std::string_view to_string(DecayLaw law) noexcept;

struct DecayReport {
  DecayLaw preferred = DecayLaw::finite_rank;
  bool finite_rank = false;
  // log(Delta_K) = a + b K
  double exponential_slope = 0.0;
  double exponential_r2 = 0.0;
  // log(Delta_K) = a + b log K
  double polynomial_slope = 0.0;
  double polynomial_r2 = 0.0;
  std::size_t k_first = 0;
  std::size_t k_last = 0;
  std::vector<double> tail;  // Delta_K for K = 0..J
  std::vector<double> eigen_gaps;  // theta_j - theta_{j+1}
};

/// Fits both decay laws to log Delta_K over the reliable range
/// K = 1..min(J - 1, max(8, T / 8)), stopping once Delta_K drops below
/// 1e-6 * Delta_0. A spectrum with fewer than 6 retained eigenpairs is
/// reported as finite rank. Throws diagnostic-unavailable when fewer than 4
/// positive Delta_K values fall in the range.
DecayReport decay_diagnostic(const FpcaModel& model);

/// CSV bundle: a schema line, then rows `grid`, `mean` and `psi_j` (the latter
/// carrying theta_j in the second column) over the original time points.
void write_fpca_bundle(const FpcaModel& model, std::ostream& out);
FpcaModel read_fpca_bundle(std::istream& in);

}  // namespace mftp

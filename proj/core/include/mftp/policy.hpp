#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mftp/fgrid.hpp"
#include "mftp/fpca.hpp"
#include "mftp/random.hpp"

namespace mftp {

enum class PolicyKind { identity, scale_warp, window_threshold, additive };

std::string_view to_string(PolicyKind kind) noexcept;

/// Closed interval [lo, hi] in normalized time.
struct Window {
  double lo = 0.0;
  double hi = 1.0;
};

/// Declarative treatment modification rule q(x, a).
///
///  - identity: returns the curve unchanged.
///  - scale_warp: q(a)(t) = tau * a(t^e), a evaluated by linear interpolation.
///  - window_threshold: inside the windows, points with a(t) < threshold are
///    multiplied by tau; with renormalize, the whole curve is then multiplied
///    by c_q = int(a) / int(modified) so the curve's integral is preserved.
///  - additive: q(a) = a + offset for a fixed offset curve on the grid.
///
/// Shipped kinds ignore the covariates; the application functions accept them
/// so covariate-dependent rules keep the same call shape.
class ModificationPolicy {
 public:
  static ModificationPolicy identity();
  static ModificationPolicy scale_warp(double tau, double warp_exponent = 1.2);
  static ModificationPolicy window_threshold(std::vector<Window> windows, double threshold, double tau,
                                             bool renormalize = true);
  static ModificationPolicy additive(std::vector<double> offset);

  PolicyKind kind() const noexcept { return kind_; }
  double tau() const noexcept { return tau_; }
  double warp_exponent() const noexcept { return warp_exponent_; }
  const std::vector<Window>& windows() const noexcept { return windows_; }
  double threshold() const noexcept { return threshold_; }
  bool renormalize() const noexcept { return renormalize_; }
  const std::vector<double>& offset() const noexcept { return offset_; }

  /// Same rule with a different tau (validated). Used for tau sweeps.
  ModificationPolicy with_tau(double tau) const;

  std::string describe() const;

 private:
  ModificationPolicy() = default;

  PolicyKind kind_ = PolicyKind::identity;
  double tau_ = 1.0;
  double warp_exponent_ = 1.2;
  std::vector<Window> windows_;
  double threshold_ = 0.0;
  bool renormalize_ = false;
  std::vector<double> offset_;
};

/// Windows for a clock-time interval on a grid spanning one 24-hour day.
/// A wrap-around interval such as 23:00-06:00 becomes two windows.
std::vector<Window> clock_windows(double start_hour, double end_hour);

std::vector<double> apply_policy(const ModificationPolicy& policy, const TimeGrid& grid,
                                 std::span<const double> curve, std::span<const double> covariates = {});
std::vector<double> apply_policy(const ModificationPolicy& policy, const TimeGrid& grid,
                                 const FunctionalSample& sample);
CurveMatrix apply_policy(const ModificationPolicy& policy, const TimeGrid& grid, const CurveMatrix& curves,
                         const Eigen::MatrixXd* covariates = nullptr);

/// Policy-shifted curves projected on the observed-treatment basis.
ScoreMatrix shifted_scores(const ModificationPolicy& policy, const FpcaModel& model, const Dataset& data,
                           std::optional<std::size_t> components = std::nullopt);

struct LipschitzEstimate {
  double max_ratio = 0.0;   // max ||q(a1) - q(a2)|| / ||a1 - a2|| over sampled pairs
  double mean_ratio = 0.0;
  std::size_t pairs = 0;
};

/// Empirical Lipschitz constant of a policy over random pairs of curves.
LipschitzEstimate empirical_lipschitz(const ModificationPolicy& policy, const TimeGrid& grid,
                                      const CurveMatrix& curves, std::size_t pairs, Rng& rng);

}  // namespace mftp

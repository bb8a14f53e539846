#include "mftp/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mftp {

namespace {

bool in_windows(double t, const std::vector<Window>& windows) {
  for (const auto& w : windows) {
    if (t >= w.lo && t <= w.hi) return true;
  }
  return false;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCategory::config, message);
}

}  // namespace

std::string_view to_string(PolicyKind kind) noexcept {
  switch (kind) {
    case PolicyKind::identity: return "identity";
    case PolicyKind::scale_warp: return "scale_warp";
    case PolicyKind::window_threshold: return "window_threshold";
    case PolicyKind::additive: return "additive";
  }
  return "unknown";
}

ModificationPolicy ModificationPolicy::identity() { return ModificationPolicy(); }

ModificationPolicy ModificationPolicy::scale_warp(double tau, double warp_exponent) {
  require(std::isfinite(tau) && tau > 0.0, "scale_warp: tau must be > 0");
  require(std::isfinite(warp_exponent) && warp_exponent > 0.0, "scale_warp: warp_exponent must be > 0");
  ModificationPolicy p;
  p.kind_ = PolicyKind::scale_warp;
  p.tau_ = tau;
  p.warp_exponent_ = warp_exponent;
  return p;
}

ModificationPolicy ModificationPolicy::window_threshold(std::vector<Window> windows, double threshold, double tau,
                                                        bool renormalize) {
  require(!windows.empty(), "window_threshold: at least one window is required");
  for (const auto& w : windows) {
    require(std::isfinite(w.lo) && std::isfinite(w.hi) && 0.0 <= w.lo && w.lo < w.hi && w.hi <= 1.0,
            "window_threshold: windows must satisfy 0 <= lo < hi <= 1");
  }
  require(std::isfinite(threshold), "window_threshold: threshold must be finite");
  require(std::isfinite(tau) && tau > 0.0, "window_threshold: tau must be > 0");
  ModificationPolicy p;
  p.kind_ = PolicyKind::window_threshold;
  p.windows_ = std::move(windows);
  p.threshold_ = threshold;
  p.tau_ = tau;
  p.renormalize_ = renormalize;
  return p;
}

ModificationPolicy ModificationPolicy::additive(std::vector<double> offset) {
  require(!offset.empty(), "additive: offset curve is empty");
  for (double v : offset) require(std::isfinite(v), "additive: offset must be finite");
  ModificationPolicy p;
  p.kind_ = PolicyKind::additive;
  p.offset_ = std::move(offset);
  return p;
}

ModificationPolicy ModificationPolicy::with_tau(double tau) const {
  switch (kind_) {
    case PolicyKind::scale_warp: return scale_warp(tau, warp_exponent_);
    case PolicyKind::window_threshold: return window_threshold(windows_, threshold_, tau, renormalize_);
    case PolicyKind::identity:
    case PolicyKind::additive:
      throw Error(ErrorCategory::config, std::string("policy kind ") + std::string(to_string(kind_)) +
                                             " has no tau parameter");
  }
  return *this;
}

std::string ModificationPolicy::describe() const {
  std::ostringstream os;
  os << to_string(kind_);
  switch (kind_) {
    case PolicyKind::identity: break;
    case PolicyKind::scale_warp: os << "(tau=" << tau_ << ", warp_exponent=" << warp_exponent_ << ")"; break;
    case PolicyKind::window_threshold:
      os << "(tau=" << tau_ << ", threshold=" << threshold_ << ", renormalize=" << (renormalize_ ? "true" : "false")
         << ", windows=";
      for (std::size_t k = 0; k < windows_.size(); ++k) {
        os << (k ? ";" : "") << "[" << windows_[k].lo << "," << windows_[k].hi << "]";
      }
      os << ")";
      break;
    case PolicyKind::additive: os << "(offset of length " << offset_.size() << ")"; break;
  }
  return os.str();
}

std::vector<Window> clock_windows(double start_hour, double end_hour) {
  require(start_hour >= 0.0 && start_hour <= 24.0 && end_hour >= 0.0 && end_hour <= 24.0,
          "clock window hours must lie in [0, 24]");
  require(start_hour != end_hour, "clock window is empty");
  const double lo = start_hour / 24.0;
  const double hi = end_hour / 24.0;
  if (lo < hi) return {Window{lo, hi}};
  std::vector<Window> out;
  if (lo < 1.0) out.push_back(Window{lo, 1.0});
  if (hi > 0.0) out.push_back(Window{0.0, hi});
  return out;
}

std::vector<double> apply_policy(const ModificationPolicy& policy, const TimeGrid& grid, std::span<const double> curve,
                                 std::span<const double> /*covariates*/) {
  if (curve.size() != grid.size()) throw_dimension("apply_policy curve", grid.size(), curve.size());
  const auto t = grid.points();
  std::vector<double> out(curve.begin(), curve.end());
  switch (policy.kind()) {
    case PolicyKind::identity:
      break;
    case PolicyKind::scale_warp: {
      CurveMatrix one(1, static_cast<Eigen::Index>(curve.size()));
      for (std::size_t j = 0; j < curve.size(); ++j) one(0, static_cast<Eigen::Index>(j)) = curve[j];
      const CurveMatrix warped = apply_policy(policy, grid, one);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] = warped(0, static_cast<Eigen::Index>(j));
      break;
    }
    case PolicyKind::window_threshold: {
      for (std::size_t j = 0; j < out.size(); ++j) {
        if (in_windows(t[j], policy.windows()) && curve[j] < policy.threshold()) out[j] = policy.tau() * curve[j];
      }
      if (policy.renormalize()) {
        const double modified = integral(out, grid);
        if (!(modified > 0.0)) {
          throw Error(ErrorCategory::policy, "renormalization undefined: integral of the modified curve is " +
                                                 std::to_string(modified));
        }
        const double c_q = integral(curve, grid) / modified;
        for (double& v : out) v *= c_q;
      }
      break;
    }
    case PolicyKind::additive:
      if (policy.offset().size() != curve.size()) throw_dimension("additive policy offset", curve.size(), policy.offset().size());
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += policy.offset()[j];
      break;
  }
  return out;
}

std::vector<double> apply_policy(const ModificationPolicy& policy, const TimeGrid& grid,
                                 const FunctionalSample& sample) {
  return apply_policy(policy, grid, sample.values, sample.covariates);
}

CurveMatrix apply_policy(const ModificationPolicy& policy, const TimeGrid& grid, const CurveMatrix& curves,
                         const Eigen::MatrixXd* covariates) {
  if (policy.kind() == PolicyKind::identity) return curves;
  if (curves.cols() != static_cast<Eigen::Index>(grid.size())) {
    throw_dimension("apply_policy curves (columns)", grid.size(), static_cast<std::size_t>(curves.cols()));
  }
  CurveMatrix out(curves.rows(), curves.cols());
  if (policy.kind() == PolicyKind::scale_warp) {
    // Same interpolation stencil for every curve: out = tau * curves * S.
    const auto t = grid.points();
    const auto T = curves.cols();
    std::vector<Eigen::Index> lo(static_cast<std::size_t>(T));
    std::vector<double> frac(static_cast<std::size_t>(T));
    for (Eigen::Index j = 0; j < T; ++j) {
      const double u = std::clamp(std::pow(t[static_cast<std::size_t>(j)], policy.warp_exponent()), 0.0, 1.0);
      if (u <= t.front()) {
        lo[j] = 0;
        frac[j] = 0.0;
      } else if (u >= t.back()) {
        lo[j] = T - 2;
        frac[j] = 1.0;
      } else {
        const auto hi = static_cast<Eigen::Index>(std::upper_bound(t.begin(), t.end(), u) - t.begin());
        lo[j] = hi - 1;
        frac[j] = (u - t[static_cast<std::size_t>(hi - 1)]) / (t[static_cast<std::size_t>(hi)] - t[static_cast<std::size_t>(hi - 1)]);
      }
    }
    for (Eigen::Index i = 0; i < curves.rows(); ++i) {
      for (Eigen::Index j = 0; j < T; ++j) {
        const double a = curves(i, lo[j]);
        const double b = curves(i, lo[j] + 1);
        out(i, j) = policy.tau() * (frac[j] == 1.0 ? b : a + frac[j] * (b - a));
      }
    }
    return out;
  }
  std::vector<double> x;
  for (Eigen::Index i = 0; i < curves.rows(); ++i) {
    if (covariates != nullptr) {
      x.resize(static_cast<std::size_t>(covariates->cols()));
      for (Eigen::Index k = 0; k < covariates->cols(); ++k) x[static_cast<std::size_t>(k)] = (*covariates)(i, k);
    }
    const auto row = apply_policy(policy, grid, row_span(curves, i), x);
    for (Eigen::Index j = 0; j < curves.cols(); ++j) out(i, j) = row[static_cast<std::size_t>(j)];
  }
  return out;
}

ScoreMatrix shifted_scores(const ModificationPolicy& policy, const FpcaModel& model, const Dataset& data,
                           std::optional<std::size_t> components) {
  if (!(model.grid() == data.grid())) throw Error(ErrorCategory::dimension, "shifted_scores: model and data grids differ");
  const CurveMatrix shifted = apply_policy(policy, data.grid(), data.curves(), &data.covariates());
  return project_scores(model, shifted, components);
}

LipschitzEstimate empirical_lipschitz(const ModificationPolicy& policy, const TimeGrid& grid, const CurveMatrix& curves,
                                      std::size_t pairs, Rng& rng) {
  LipschitzEstimate est;
  if (curves.rows() < 2) return est;
  std::uniform_int_distribution<Eigen::Index> pick(0, curves.rows() - 1);
  double sum = 0.0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const Eigen::Index a = pick(rng);
    Eigen::Index b = pick(rng);
    if (a == b) b = (b + 1) % curves.rows();
    const double base = l2_distance(row_span(curves, a), row_span(curves, b), grid);
    if (base <= 0.0) continue;
    const auto qa = apply_policy(policy, grid, row_span(curves, a));
    const auto qb = apply_policy(policy, grid, row_span(curves, b));
    const double ratio = l2_distance(qa, qb, grid) / base;
    est.max_ratio = std::max(est.max_ratio, ratio);
    sum += ratio;
    ++est.pairs;
  }
  if (est.pairs > 0) est.mean_ratio = sum / static_cast<double>(est.pairs);
  return est;
}

}  // namespace mftp

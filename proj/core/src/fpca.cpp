#include "mftp/fpca.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "mftp/stats.hpp"

namespace mftp {

namespace {

constexpr double kAbsoluteFloor = 1e-10;
constexpr double kRelativeFloor = 1e-8;
constexpr double kSignTie = 1e-8;
constexpr const char* kBundleSchema = "mftp-fpca-bundle";
constexpr int kBundleVersion = 1;

// Weighted sum >= 0; on a tie the first coordinate that is clearly nonzero is positive.
void fix_sign(Eigen::Ref<Eigen::VectorXd> psi, std::span<const double> w) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < psi.size(); ++j) s += w[static_cast<std::size_t>(j)] * psi(j);
  if (std::abs(s) > kSignTie) {
    if (s < 0.0) psi = -psi;
    return;
  }
  const double scale = psi.cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < psi.size(); ++j) {
    if (std::abs(psi(j)) > 1e-6 * scale) {
      if (psi(j) < 0.0) psi = -psi;
      return;
    }
  }
}

std::vector<double> parse_row(const std::string& line, std::string& label) {
  std::vector<double> values;
  std::stringstream ss(line);
  std::string cell;
  bool first = true;
  while (std::getline(ss, cell, ',')) {
    if (first) {
      label = cell;
      first = false;
      continue;
    }
    values.push_back(std::stod(cell));
  }
  return values;
}

}  // namespace

FpcaModel::FpcaModel(TimeGrid grid, Eigen::VectorXd mean, Eigen::VectorXd eigenvalues,
                     Eigen::MatrixXd eigenfunctions, std::size_t K, double discarded_variance)
    : grid_(std::move(grid)),
      mean_(std::move(mean)),
      eigenvalues_(std::move(eigenvalues)),
      eigenfunctions_(std::move(eigenfunctions)),
      K_(K),
      discarded_variance_(discarded_variance) {
  const std::size_t T = grid_.size();
  if (static_cast<std::size_t>(mean_.size()) != T) throw_dimension("FpcaModel mean", T, static_cast<std::size_t>(mean_.size()));
  if (static_cast<std::size_t>(eigenfunctions_.rows()) != T && eigenfunctions_.cols() > 0) {
    throw_dimension("FpcaModel eigenfunctions (rows)", T, static_cast<std::size_t>(eigenfunctions_.rows()));
  }
  if (eigenfunctions_.cols() != eigenvalues_.size()) {
    throw_dimension("FpcaModel eigenfunctions (columns)", static_cast<std::size_t>(eigenvalues_.size()),
                    static_cast<std::size_t>(eigenfunctions_.cols()));
  }
  if (K_ > J()) {
    throw Error(ErrorCategory::dimension,
                "truncation K=" + std::to_string(K_) + " exceeds retained components J=" + std::to_string(J()));
  }
  for (Eigen::Index j = 1; j < eigenvalues_.size(); ++j) {
    if (eigenvalues_(j) > eigenvalues_(j - 1)) throw Error(ErrorCategory::numeric, "eigenvalues must be nonincreasing");
  }
  if (eigenvalues_.size() > 0 && eigenvalues_.minCoeff() < 0.0) {
    throw Error(ErrorCategory::numeric, "eigenvalues must be nonnegative");
  }
}

FpcaModel FpcaModel::with_K(std::size_t K) const {
  return FpcaModel(grid_, mean_, eigenvalues_, eigenfunctions_, K, discarded_variance_);
}

std::size_t select_k(const Eigen::VectorXd& eigenvalues, const KRule& rule) {
  const auto J = static_cast<std::size_t>(eigenvalues.size());
  if (rule.kind == KRule::Kind::fixed) {
    if (rule.k > J) {
      throw Error(ErrorCategory::insufficient_data,
                  "fixed K=" + std::to_string(rule.k) + " exceeds the " + std::to_string(J) +
                      " components above the eigen-floor");
    }
    return rule.k;
  }
  if (!(rule.fraction > 0.0 && rule.fraction <= 1.0)) {
    throw Error(ErrorCategory::config, "variance fraction must lie in (0, 1]");
  }
  const double total = eigenvalues.sum();
  if (J == 0 || total <= 0.0) return 0;
  double acc = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    acc += eigenvalues(static_cast<Eigen::Index>(j));
    // Relative slack keeps rho = 1 reachable despite rounding.
    if (acc >= rule.fraction * total * (1.0 - 1e-12)) return j + 1;
  }
  return J;
}

FpcaModel fit_fpca(const TimeGrid& grid, const CurveMatrix& curves, const KRule& rule) {
  const auto n = curves.rows();
  const auto T = static_cast<Eigen::Index>(grid.size());
  if (n < 2) throw Error(ErrorCategory::insufficient_data, "FPCA needs at least 2 curves, got " + std::to_string(n));
  if (curves.cols() != T) throw_dimension("fit_fpca curves (columns)", grid.size(), static_cast<std::size_t>(curves.cols()));

  const Eigen::VectorXd mean = curves.colwise().mean().transpose();
  Eigen::MatrixXd centered = curves.rowwise() - mean.transpose();

  // Quadrature-weighted covariance W^{1/2} C W^{1/2}; its eigenvectors map back
  // to L2-orthonormal eigenfunctions via W^{-1/2}.
  const auto w = grid.weights();
  Eigen::VectorXd sqrt_w(T);
  for (Eigen::Index j = 0; j < T; ++j) sqrt_w(j) = std::sqrt(w[static_cast<std::size_t>(j)]);
  centered = centered * sqrt_w.asDiagonal();
  Eigen::MatrixXd op = Eigen::MatrixXd::Zero(T, T);
  op.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / static_cast<double>(n));
  op = op.selfadjointView<Eigen::Lower>();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(op);
  if (solver.info() != Eigen::Success) {
    std::ostringstream os;
    os << "covariance eigensolver did not converge (T=" << T << ", n=" << n
       << ", max |entry|=" << op.cwiseAbs().maxCoeff() << ", trace=" << op.trace() << ")";
    throw Error(ErrorCategory::numeric, os.str());
  }
  // Ascending order from the solver; walk it backwards.
  const Eigen::VectorXd& values = solver.eigenvalues();
  const Eigen::MatrixXd& vectors = solver.eigenvectors();
  const double top = std::max(0.0, values(T - 1));
  const double floor = std::max(kAbsoluteFloor, kRelativeFloor * top);

  Eigen::Index J = 0;
  while (J < T && values(T - 1 - J) >= floor) ++J;
  double discarded = 0.0;
  for (Eigen::Index j = J; j < T; ++j) discarded += std::max(0.0, values(T - 1 - j));

  Eigen::VectorXd theta(J);
  Eigen::MatrixXd psi(T, J);
  for (Eigen::Index j = 0; j < J; ++j) {
    theta(j) = values(T - 1 - j);
    Eigen::VectorXd v = vectors.col(T - 1 - j).cwiseQuotient(sqrt_w);
    double norm2 = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) norm2 += w[static_cast<std::size_t>(t)] * v(t) * v(t);
    v /= std::sqrt(norm2);
    fix_sign(v, w);
    psi.col(j) = v;
  }
  const std::size_t K = select_k(theta, rule);
  return FpcaModel(grid, mean, std::move(theta), std::move(psi), K, discarded);
}

FpcaModel fit_fpca(const Dataset& data, const KRule& rule) { return fit_fpca(data.grid(), data.curves(), rule); }

ScoreMatrix project_scores(const FpcaModel& model, const CurveMatrix& curves, std::optional<std::size_t> components) {
  const std::size_t m = components.value_or(model.K());
  if (m == 0) throw Error(ErrorCategory::insufficient_data, "projection needs at least one retained component");
  if (m > model.J()) {
    throw Error(ErrorCategory::dimension,
                "requested " + std::to_string(m) + " components but only " + std::to_string(model.J()) + " retained");
  }
  const auto T = static_cast<Eigen::Index>(model.grid().size());
  if (curves.cols() != T) throw_dimension("project_scores curves (columns)", model.grid().size(), static_cast<std::size_t>(curves.cols()));

  const auto w = model.grid().weights();
  const auto mi = static_cast<Eigen::Index>(m);
  // Weighted, scaled basis: column j = W psi_j / sqrt(theta_j).
  Eigen::MatrixXd basis = model.eigenfunctions().leftCols(mi);
  for (Eigen::Index t = 0; t < T; ++t) basis.row(t) *= w[static_cast<std::size_t>(t)];
  for (Eigen::Index j = 0; j < mi; ++j) basis.col(j) /= std::sqrt(model.eigenvalues()(j));

  ScoreMatrix out;
  out.scores = (curves.rowwise() - model.mean().transpose()) * basis;
  out.standardized = true;
  return out;
}

Eigen::VectorXd project_curve(const FpcaModel& model, std::span<const double> curve, std::optional<std::size_t> components) {
  if (curve.size() != model.grid().size()) throw_dimension("project_curve", model.grid().size(), curve.size());
  CurveMatrix one(1, static_cast<Eigen::Index>(curve.size()));
  for (std::size_t j = 0; j < curve.size(); ++j) one(0, static_cast<Eigen::Index>(j)) = curve[j];
  return project_scores(model, one, components).scores.row(0).transpose();
}

Eigen::VectorXd reconstruct(const FpcaModel& model, const Eigen::VectorXd& scores) {
  if (static_cast<std::size_t>(scores.size()) > model.J()) {
    throw_dimension("reconstruct scores", model.J(), static_cast<std::size_t>(scores.size()));
  }
  Eigen::VectorXd out = model.mean();
  for (Eigen::Index j = 0; j < scores.size(); ++j) {
    out += std::sqrt(model.eigenvalues()(j)) * scores(j) * model.eigenfunctions().col(j);
  }
  return out;
}

double tail_residual(const FpcaModel& model, std::size_t K) {
  if (K > model.J()) {
    throw Error(ErrorCategory::dimension,
                "tail_residual: K=" + std::to_string(K) + " outside [0, " + std::to_string(model.J()) + "]");
  }
  double acc = 0.0;
  for (std::size_t j = model.J(); j-- > K;) acc += model.eigenvalues()(static_cast<Eigen::Index>(j));
  return acc;
}

std::string_view to_string(DecayLaw law) noexcept {
  switch (law) {
    case DecayLaw::exponential: return "exponential";
    case DecayLaw::polynomial: return "polynomial";
    case DecayLaw::finite_rank: return "finite-rank";
  }
  return "unknown";
}

DecayReport decay_diagnostic(const FpcaModel& model) {
  DecayReport report;
  const std::size_t J = model.J();
  report.tail.resize(J + 1);
  // Suffix sums so that Delta_{K-1} - Delta_K = theta_K holds term by term.
  double acc = 0.0;
  report.tail[J] = 0.0;
  for (std::size_t j = J; j-- > 0;) {
    acc += model.eigenvalues()(static_cast<Eigen::Index>(j));
    report.tail[j] = acc;
  }
  for (std::size_t j = 0; j + 1 < J; ++j) {
    report.eigen_gaps.push_back(model.eigenvalues()(static_cast<Eigen::Index>(j)) -
                                model.eigenvalues()(static_cast<Eigen::Index>(j + 1)));
  }
  if (J < 6) {
    report.finite_rank = true;
    report.preferred = DecayLaw::finite_rank;
    return report;
  }

  const std::size_t k_cap = std::min<std::size_t>(J - 1, std::max<std::size_t>(8, model.grid().size() / 8));
  const double cutoff = 1e-6 * report.tail[0];
  std::vector<double> ks, log_ks, log_tail;
  for (std::size_t k = 1; k <= k_cap; ++k) {
    if (!(report.tail[k] > cutoff)) break;
    ks.push_back(static_cast<double>(k));
    log_ks.push_back(std::log(static_cast<double>(k)));
    log_tail.push_back(std::log(report.tail[k]));
  }
  if (ks.size() < 4) {
    throw Error(ErrorCategory::diagnostic,
                "decay diagnostic needs at least 4 positive tail residuals in the reliable range, found " +
                    std::to_string(ks.size()));
  }
  const auto expo = stats::least_squares_line(ks, log_tail);
  const auto poly = stats::least_squares_line(log_ks, log_tail);
  report.exponential_slope = expo.slope;
  report.exponential_r2 = expo.r_squared;
  report.polynomial_slope = poly.slope;
  report.polynomial_r2 = poly.r_squared;
  report.k_first = 1;
  report.k_last = ks.size();
  report.preferred = expo.r_squared >= poly.r_squared ? DecayLaw::exponential : DecayLaw::polynomial;
  return report;
}

void write_fpca_bundle(const FpcaModel& model, std::ostream& out) {
  const auto prec = out.precision(std::numeric_limits<double>::max_digits10);
  out << "# " << kBundleSchema << " v" << kBundleVersion << "\n";
  out << "domain," << model.grid().domain_lo() << "," << model.grid().domain_hi() << "\n";
  out << "K," << model.K() << "\n";
  out << "discarded_variance," << model.discarded_variance() << "\n";
  out << "grid";
  for (double t : model.grid().original()) out << "," << t;
  out << "\nmean";
  for (Eigen::Index t = 0; t < model.mean().size(); ++t) out << "," << model.mean()(t);
  out << "\n";
  for (Eigen::Index j = 0; j < model.eigenvalues().size(); ++j) {
    out << "psi_" << (j + 1) << "," << model.eigenvalues()(j);
    for (Eigen::Index t = 0; t < model.eigenfunctions().rows(); ++t) out << "," << model.eigenfunctions()(t, j);
    out << "\n";
  }
  out.precision(prec);
}

FpcaModel read_fpca_bundle(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind(std::string("# ") + kBundleSchema, 0) != 0) {
    throw Error(ErrorCategory::io, "not an FPCA bundle (missing schema line)");
  }
  double lo = 0.0, hi = 1.0, discarded = 0.0;
  std::size_t K = 0;
  std::vector<double> grid, mean, theta;
  std::vector<std::vector<double>> psi;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::string label;
      auto values = parse_row(line, label);
      if (label == "domain" && values.size() == 2) {
        lo = values[0];
        hi = values[1];
      } else if (label == "K" && values.size() == 1) {
        K = static_cast<std::size_t>(values[0]);
      } else if (label == "discarded_variance" && values.size() == 1) {
        discarded = values[0];
      } else if (label == "grid") {
        grid = std::move(values);
      } else if (label == "mean") {
        mean = std::move(values);
      } else if (label.rfind("psi_", 0) == 0 && !values.empty()) {
        theta.push_back(values.front());
        values.erase(values.begin());
        psi.push_back(std::move(values));
      } else {
        throw Error(ErrorCategory::io, "unrecognized FPCA bundle row '" + label + "'");
      }
    }
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCategory::io, "FPCA bundle contains a non-numeric cell");
  }
  TimeGrid tg(grid, lo, hi);
  const auto T = static_cast<Eigen::Index>(grid.size());
  if (static_cast<Eigen::Index>(mean.size()) != T) throw_dimension("FPCA bundle mean", grid.size(), mean.size());
  Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(mean.data(), T);
  Eigen::VectorXd th(static_cast<Eigen::Index>(theta.size()));
  Eigen::MatrixXd ef(T, static_cast<Eigen::Index>(theta.size()));
  for (std::size_t j = 0; j < theta.size(); ++j) {
    if (static_cast<Eigen::Index>(psi[j].size()) != T) throw_dimension("FPCA bundle eigenfunction", grid.size(), psi[j].size());
    th(static_cast<Eigen::Index>(j)) = theta[j];
    ef.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(psi[j].data(), T);
  }
  return FpcaModel(std::move(tg), std::move(m), std::move(th), std::move(ef), K, discarded);
}

}  // namespace mftp

#include "mftp/glm.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mftp/error.hpp"

namespace mftp::glm {

namespace {

constexpr double kSingular = 1e-12;

double bernoulli_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  // -2 log-likelihood, written to stay finite for large |eta|.
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double e = eta(i);
    const double log1pexp = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    dev += 2.0 * (log1pexp - y(i) * e);
  }
  return dev;
}

}  // namespace

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  const auto n = static_cast<double>(x.rows());
  s.center = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  s.constant.assign(static_cast<std::size_t>(x.cols()), false);
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const double var = (x.col(k).array() - s.center(k)).square().sum() / std::max(1.0, n);
    const double sd = std::sqrt(var);
    const double magnitude = std::max(1.0, std::abs(s.center(k)));
    if (!(sd > 1e-12 * magnitude)) {
      s.scale(k) = 1.0;
      s.constant[static_cast<std::size_t>(k)] = true;
    } else {
      s.scale(k) = sd;
    }
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd z = (x.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
  for (Eigen::Index k = 0; k < z.cols(); ++k) {
    if (constant[static_cast<std::size_t>(k)]) z.col(k).setZero();
  }
  return z;
}

std::vector<double> lambda_grid(double gram_trace, std::size_t n, std::size_t points) {
  std::vector<double> grid(points);
  const double scale = gram_trace / static_cast<double>(std::max<std::size_t>(1, n));
  const double lo = std::log(1e-6), hi = std::log(1e2);
  for (std::size_t k = 0; k < points; ++k) {
    const double f = points == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(points - 1);
    grid[k] = scale * std::exp(lo + f * (hi - lo));
  }
  return grid;
}

RidgeFit ridge(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, std::optional<double> fixed_lambda) {
  const auto n = z.rows();
  const auto d = z.cols();
  RidgeFit fit;
  fit.intercept = y.mean();
  const Eigen::VectorXd yc = y.array() - fit.intercept;
  const double yy = yc.squaredNorm();
  if (d == 0) {
    fit.coefficients.resize(0);
    fit.lambda = fixed_lambda.value_or(0.0);
    fit.rss = yy;
    const double denom = static_cast<double>(n) - 1.0;
    fit.gcv = denom > 0.0 ? static_cast<double>(n) * yy / (denom * denom) : 0.0;
    return fit;
  }

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(z.transpose());
  gram = gram.selfadjointView<Eigen::Lower>();
  const Eigen::VectorXd zy = z.transpose() * yc;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw Error(ErrorCategory::numeric, "ridge: Gram eigendecomposition failed");
  const Eigen::VectorXd s = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::VectorXd u = eig.eigenvectors().transpose() * zy;
  const double smax = s.maxCoeff();

  auto evaluate = [&](double lambda, double& rss, double& df) {
    rss = yy;
    df = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      if (s(k) <= kSingular * smax) continue;  // zero columns (constant features)
      const double den = s(k) + lambda;
      rss -= u(k) * u(k) * (2.0 / den - s(k) / (den * den));
      df += s(k) / den;
    }
    rss = std::max(rss, 0.0);
  };

  if (fixed_lambda) {
    fit.lambda = *fixed_lambda;
    if (fit.lambda < 0.0) throw Error(ErrorCategory::config, "ridge lambda must be >= 0");
    if (fit.lambda == 0.0) {
      // Directions with zero variance come from constant columns and are skipped; any
      // other near-zero eigenvalue means genuinely collinear regressors.
      std::size_t zero_dirs = 0;
      for (Eigen::Index k = 0; k < d; ++k) zero_dirs += s(k) <= kSingular * smax ? 1 : 0;
      std::size_t zero_cols = 0;
      for (Eigen::Index k = 0; k < d; ++k) zero_cols += z.col(k).squaredNorm() == 0.0 ? 1 : 0;
      if (smax <= 0.0 || zero_dirs > zero_cols) {
        std::ostringstream os;
        os << "singular normal equations with lambda = 0 (rank " << (d - static_cast<Eigen::Index>(zero_dirs)) << " of " << d
           << ", largest eigenvalue " << smax << ")";
        throw Error(ErrorCategory::numeric, os.str());
      }
    }
    evaluate(fit.lambda, fit.rss, fit.df);
  } else {
    const auto grid = lambda_grid(gram.trace(), static_cast<std::size_t>(n));
    double best = std::numeric_limits<double>::infinity();
    for (double lambda : grid) {
      double rss = 0.0, df = 0.0;
      evaluate(lambda, rss, df);
      const double denom = static_cast<double>(n) - 1.0 - df;
      const double gcv = denom > 0.0 ? static_cast<double>(n) * rss / (denom * denom)
                                     : std::numeric_limits<double>::infinity();
      if (gcv < best) {
        best = gcv;
        fit.lambda = lambda;
        fit.rss = rss;
        fit.df = df;
      }
    }
    if (!std::isfinite(best)) {
      fit.lambda = grid.back();
      evaluate(fit.lambda, fit.rss, fit.df);
    }
  }
  const double denom = static_cast<double>(n) - 1.0 - fit.df;
  fit.gcv = denom > 0.0 ? static_cast<double>(n) * fit.rss / (denom * denom) : std::numeric_limits<double>::infinity();

  Eigen::VectorXd scaled(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    scaled(k) = s(k) <= kSingular * smax ? 0.0 : u(k) / (s(k) + fit.lambda);
  }
  fit.coefficients = eig.eigenvectors() * scaled;
  return fit;
}

LogisticFit logistic(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double lambda, const LogisticOptions& options,
                     const Eigen::VectorXd* start) {
  const auto n = z.rows();
  const auto d = z.cols() + 1;
  Eigen::MatrixXd x(n, d);
  x.col(0).setOnes();
  x.rightCols(d - 1) = z;

  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d, lambda);
  penalty(0) = 0.0;
  for (Eigen::Index k = 1; k < d; ++k) {
    if (z.col(k - 1).squaredNorm() == 0.0) penalty(k) = std::max(lambda, 1.0);  // pins unused columns at 0
  }

  LogisticFit fit;
  if (start != nullptr && start->size() == d) {
    fit.beta = *start;
  } else {
    fit.beta = Eigen::VectorXd::Zero(d);
    const double ybar = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
    fit.beta(0) = std::log(ybar / (1.0 - ybar));
  }

  auto penalized = [&](const Eigen::VectorXd& beta, const Eigen::VectorXd& eta) {
    return bernoulli_deviance(y, eta) + (penalty.array() * beta.array().square()).sum();
  };

  Eigen::VectorXd eta = x * fit.beta;
  double current = penalized(fit.beta, eta);
  fit.trace.push_back(current);
  Eigen::VectorXd prob(n), w(n);
  Eigen::MatrixXd hessian(d, d);

  for (fit.iterations = 1; fit.iterations <= options.max_iterations; ++fit.iterations) {
    for (Eigen::Index i = 0; i < n; ++i) {
      prob(i) = logistic_fn(eta(i));
      w(i) = std::max(prob(i) * (1.0 - prob(i)), 1e-12);
    }
    hessian.setZero();
    const Eigen::MatrixXd xw = x.array().colwise() * w.array().sqrt();
    hessian.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
    hessian = hessian.selfadjointView<Eigen::Lower>();
    hessian.diagonal() += penalty;
    const Eigen::VectorXd gradient = x.transpose() * (y - prob) - (penalty.array() * fit.beta.array()).matrix();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    if (ldlt.info() != Eigen::Success) break;
    Eigen::VectorXd step = ldlt.solve(gradient);
    if (!step.allFinite()) break;

    // Step-halving on increase of the penalized deviance.
    Eigen::VectorXd candidate = fit.beta + step;
    Eigen::VectorXd candidate_eta = x * candidate;
    double value = penalized(candidate, candidate_eta);
    std::size_t halvings = 0;
    while (!(value <= current + 1e-12 * std::abs(current)) && halvings < options.max_halvings) {
      step *= 0.5;
      candidate = fit.beta + step;
      candidate_eta = x * candidate;
      value = penalized(candidate, candidate_eta);
      ++halvings;
    }
    fit.beta = candidate;
    eta = candidate_eta;
    current = value;
    fit.trace.push_back(current);
    if (step.cwiseAbs().maxCoeff() < options.tolerance) {
      fit.converged = true;
      break;
    }
  }
  if (fit.iterations > options.max_iterations) fit.iterations = options.max_iterations;

  for (Eigen::Index i = 0; i < n; ++i) {
    prob(i) = logistic_fn(eta(i));
    w(i) = std::max(prob(i) * (1.0 - prob(i)), 1e-12);
  }
  fit.deviance = bernoulli_deviance(y, eta);
  const Eigen::MatrixXd xw = x.array().colwise() * w.array().sqrt();
  Eigen::MatrixXd info = xw.transpose() * xw;
  Eigen::MatrixXd h = info;
  h.diagonal() += penalty;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  fit.df = ldlt.info() == Eigen::Success ? ldlt.solve(info).trace() : static_cast<double>(d);
  return fit;
}

}  // namespace mftp::glm

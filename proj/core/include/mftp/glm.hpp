#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

namespace mftp::glm {

/// Column centering and scaling. Columns with zero spread are flagged and
/// mapped to zero so they never enter a solve.
struct Standardizer {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  std::vector<bool> constant;

  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// lambda values log-spaced over [1e-6, 1e2] * trace(Z'Z) / n.
std::vector<double> lambda_grid(double gram_trace, std::size_t n, std::size_t points = 25);

struct RidgeFit {
  Eigen::VectorXd coefficients;  // on the standardized columns
  double intercept = 0.0;        // mean of y (columns are centered)
  double lambda = 0.0;
  double gcv = 0.0;
  double df = 0.0;
  double rss = 0.0;
};

/// Ridge regression of y on standardized Z with an unpenalized intercept.
/// A fixed lambda is used when given, otherwise the GCV minimizer over
/// lambda_grid. Throws numeric error when lambda = 0 and Z'Z is singular.
RidgeFit ridge(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, std::optional<double> fixed_lambda);

struct LogisticOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-8;
  std::size_t max_halvings = 30;
};

struct LogisticFit {
  Eigen::VectorXd beta;  // intercept first, then standardized columns
  bool converged = false;
  std::size_t iterations = 0;
  double deviance = 0.0;
  double df = 0.0;
  std::vector<double> trace;  // penalized deviance per iteration
};

/// Ridge-penalized logistic regression by IRLS with step-halving on
/// penalized-deviance increase. Convergence: max |coefficient change| < tol.
/// Does not throw on non-convergence; callers inspect `converged`.
LogisticFit logistic(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double lambda,
                     const LogisticOptions& options = {}, const Eigen::VectorXd* start = nullptr);

inline double logistic_fn(double eta) {
  if (eta >= 0.0) {
    const double e = std::exp(-eta);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace mftp::glm

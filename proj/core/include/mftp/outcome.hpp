#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mftp/fgrid.hpp"
#include "mftp/fpca.hpp"

namespace mftp {

enum class Link { identity, logit };

std::string_view to_string(Link link) noexcept;

struct LambdaRule {
  enum class Kind { gcv, fixed };
  Kind kind = Kind::gcv;
  double value = 0.0;

  static LambdaRule gcv() { return {}; }
  static LambdaRule fixed(double lambda) { return {Kind::fixed, lambda}; }
};

struct OutcomeOptions {
  std::optional<std::size_t> components;  // K_m; defaults to the basis K
  LambdaRule lambda = LambdaRule::gcv();
  std::optional<Link> link;  // defaults from the dataset's outcome kind
};

/// Scalar-on-function regression in the FPCA eigenbasis.
///
/// The linear predictor is intercept + sum_j b_j * score_j + sum_k c_k * x_k
/// over K_m standardized scores, i.e. beta(t) = sum_j b_j psi_j(t) / sqrt(theta_j).
/// Coefficients are stored in original units; the ridge penalty itself is
/// applied on standardized columns with the intercept unpenalized.
class OutcomeModel {
 public:
  OutcomeModel(std::shared_ptr<const FpcaModel> basis, std::size_t components, Eigen::VectorXd coefficients, Link link,
               double lambda);

  const FpcaModel& basis() const noexcept { return *basis_; }
  std::shared_ptr<const FpcaModel> basis_ptr() const noexcept { return basis_; }
  std::size_t components() const noexcept { return components_; }
  std::size_t covariate_count() const noexcept {
    return static_cast<std::size_t>(coefficients_.size()) - 1 - components_;
  }
  const Eigen::VectorXd& coefficients() const noexcept { return coefficients_; }
  double intercept() const noexcept { return coefficients_(0); }
  Link link() const noexcept { return link_; }
  double lambda() const noexcept { return lambda_; }

  double gcv = 0.0;
  double effective_df = 0.0;
  double r_squared = 0.0;
  std::size_t iterations = 0;
  std::vector<std::string> warnings;

  double linear_predictor(std::span<const double> scores, std::span<const double> x) const;
  double response(double eta) const;

 private:
  std::shared_ptr<const FpcaModel> basis_;
  std::size_t components_;
  Eigen::VectorXd coefficients_;
  Link link_;
  double lambda_;
};

/// Fits on precomputed standardized scores (n x >= K_m; only the first K_m used).
OutcomeModel fit_outcome_scores(std::shared_ptr<const FpcaModel> basis, const Eigen::MatrixXd& scores,
                                std::size_t components, const Eigen::MatrixXd& covariates, const Eigen::VectorXd& y,
                                Link link, const LambdaRule& lambda);

OutcomeModel fit_outcome(const Dataset& data, std::shared_ptr<const FpcaModel> basis,
                         const OutcomeOptions& options = {});

/// m-hat(x, curve): project the curve on the basis, then apply the model.
double predict_m(const OutcomeModel& model, std::span<const double> x, std::span<const double> curve);

/// Batch prediction from precomputed scores (n x >= K_m) and covariates.
Eigen::VectorXd predict_from_scores(const OutcomeModel& model, const Eigen::MatrixXd& scores,
                                    const Eigen::MatrixXd& covariates);

/// Bound L with |m(x, a1) - m(x, a2)| <= L ||a1 - a2||_2.
double lipschitz_constant(const OutcomeModel& model);

}  // namespace mftp

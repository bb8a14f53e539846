#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "mftp/fgrid.hpp"
#include "mftp/random.hpp"
#include "mftp/simgen.hpp"

namespace mftp::fixtures {

// GP curves around a smooth mean, p normal covariates loosely tied to the
// curve average, outcome linear in the curve integral plus noise.
inline Dataset random_dataset(std::size_t n, std::uint64_t seed, std::size_t p = 3, std::size_t T = 50) {
  const TimeGrid grid = TimeGrid::uniform(T);
  auto rng = make_rng(seed);
  CurveMatrix curves = sim::GpSampler(sim::Kernel::squared_exponential(0.1), grid).sample(n, rng);
  const auto mean = sim::default_mean_function(grid);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < T; ++j) curves(r, static_cast<Eigen::Index>(j)) += mean[j];
    const double avg = curves.row(r).mean();
    for (std::size_t k = 0; k < p; ++k) x(r, static_cast<Eigen::Index>(k)) = 0.5 * avg + normal(rng);
    y(r) = integral(row_span(curves, r), grid) + (p > 0 ? 0.3 * x(r, 0) : 0.0) + normal(rng);
  }
  return Dataset(grid, std::move(curves), std::move(x), std::move(y), OutcomeKind::continuous);
}

// A_i = 2 xi_1 phi_1 + xi_2 phi_2 with orthonormal trigonometric phi on a
// uniform grid (trapezoid-exact for full periods).
inline CurveMatrix rank2_curves(std::size_t n, std::uint64_t seed, const TimeGrid& grid) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  CurveMatrix c(n, grid.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double a = normal(rng);
    const double b = normal(rng);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double t = grid.points()[j];
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          2.0 * a * std::sqrt(2.0) * std::sin(2.0 * std::numbers::pi * t) +
          b * std::sqrt(2.0) * std::cos(2.0 * std::numbers::pi * t);
    }
  }
  return c;
}

inline double column_mean(const Eigen::MatrixXd& m, Eigen::Index c) { return m.col(c).mean(); }

}  // namespace mftp::fixtures

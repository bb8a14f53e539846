#pragma once

#include <span>
#include <vector>

namespace mftp::stats {

double mean(std::span<const double> x);
// Sample variance with divisor n - 1; zero when fewer than two values.
double variance(std::span<const double> x);

// Linear-interpolation quantile (R type 7) of unsorted data.
double quantile(std::span<const double> x, double prob);

// Nearest-rank quantile: the ceil(prob * n)-th order statistic.
double nearest_rank_quantile(std::span<const double> x, double prob);

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r_squared = 0.0;
};

LineFit least_squares_line(std::span<const double> x, std::span<const double> y);

// Average ranks (ties share the mean rank), 1-based.
std::vector<double> ranks(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace mftp::stats

#pragma once

#include <span>
#include <vector>

namespace kmf {

// Ordinary least squares y = intercept + slope x.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;  // standard error of the slope
  double r2 = 0.0;
  std::size_t points = 0;
};

// Throws std::invalid_argument with fewer than two points or constant x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> values);
// Unbiased sample variance; 0 for fewer than two values.
double variance(std::span<const double> values);

}  // namespace kmf

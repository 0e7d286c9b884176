#pragma once

#include <cstddef>
#include <span>

namespace decopt {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y ~ slope * x + intercept. Needs at least two
/// distinct x values.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace decopt

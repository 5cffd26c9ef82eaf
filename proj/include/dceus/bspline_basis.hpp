#pragma once

#include <array>
#include <cmath>

namespace dceus {

/// Uniform cubic B-spline weights for the four knots around a sample with
/// fractional offset t in [0, 1): knots floor-1, floor, floor+1, floor+2.
inline std::array<double, 4> cubic_weights(double t) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  const double u = 1.0 - t;
  return {u * u * u / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
          (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0};
}

inline std::array<double, 4> cubic_first_derivatives(double t) {
  const double u = 1.0 - t;
  return {-0.5 * u * u, 1.5 * t * t - 2.0 * t, -1.5 * t * t + t + 0.5, 0.5 * t * t};
}

inline std::array<double, 4> cubic_second_derivatives(double t) {
  return {1.0 - t, 3.0 * t - 2.0, 1.0 - 3.0 * t, t};
}

/// Centred cubic B-spline, support (-2, 2).
inline double cubic_bspline(double x) {
  x = std::abs(x);
  if (x < 1.0) return 2.0 / 3.0 - x * x + 0.5 * x * x * x;
  if (x < 2.0) {
    const double u = 2.0 - x;
    return u * u * u / 6.0;
  }
  return 0.0;
}

}  // namespace dceus

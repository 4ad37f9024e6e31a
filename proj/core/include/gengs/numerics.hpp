// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

namespace gengs {

inline constexpr double kEulerGamma = 0.57721566490153286;

// log C(n, k) via log-gamma; valid for real n >= k >= 0.
inline double log_choose(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// Overflow-safe log(1 + e^x).
inline double softplus(double x) {
  return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

// Inverse of softplus: log(e^y - 1), stable for large y.
inline double softplus_inverse(double y) {
  return y + std::log(-std::expm1(-y));
}

// Digamma by upward recurrence into the asymptotic region. Absolute error
// is below 1e-12 for x > 0.
inline double digamma(double x) {
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  acc += std::log(x) - 0.5 * inv;
  acc -= inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
  return acc;
}

}  // namespace gengs

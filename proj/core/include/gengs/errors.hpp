// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gengs {

// Distribution parameters outside their domain (rate <= 0, probability
// outside (0,1), off-simplex probability vector, non-integral count).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation asked of a family that does not support it (e.g. scalar PMF of
// a vector-valued family).
class UnsupportedFamilyError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Truncation requested for a distribution classified NotTruncatable.
class NotTruncatableError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// No truncation level within the allowed budget reaches the requested
// tail tolerance.
class TailTooHeavyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// KL(q || p) with q putting mass where p has exactly none.
class InfiniteDivergenceError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid or inconsistent experiment configuration, detected before any
// compute starts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gengs

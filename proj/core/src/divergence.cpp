// SPDX-License-Identifier: Apache-2.0
#include "gengs/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gengs/errors.hpp"

namespace gengs {

double kl_categorical(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size() || q.empty()) {
    throw std::invalid_argument(
        "kl_categorical: distributions must share a non-empty length");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (q[k] == 0.0) continue;  // 0 log 0 = 0
    if (p[k] == 0.0) {
      throw InfiniteDivergenceError(
          "kl_categorical: q has mass where p has none");
    }
    total += q[k] * std::log(q[k] / p[k]);
  }
  return std::max(0.0, total);
}

double kl_truncated(const TruncatedDistribution& q,
                    const TruncatedDistribution& p) {
  if (q.trunc_lo != p.trunc_lo || q.trunc_hi != p.trunc_hi ||
      q.c != p.c) {
    throw std::invalid_argument(
        "kl_truncated: truncations must share an identical support");
  }
  return kl_categorical(q.pi, p.pi);
}

Var kl_categorical_on_tape(Var q, std::span<const double> p) {
  if (q.size() != p.size() || p.empty()) {
    throw std::invalid_argument(
        "kl_categorical_on_tape: distributions must share a non-empty length");
  }
  Tape& tape = *q.tape();
  std::vector<double> floored(p.begin(), p.end());
  for (double& x : floored) x = std::max(x, 1e-30);
  const Var safe_q = tape.clamp_min(q, 1e-30);
  const Var log_ratio =
      tape.sub(tape.log(safe_q), tape.log(tape.constant(std::move(floored))));
  return tape.dot(q, log_ratio);
}

}  // namespace gengs

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "gengs/distributions.hpp"
#include "gengs/tape.hpp"

namespace gengs {

// KL(q || p) in nats over matching categories, with 0 log 0 = 0. Throws
// InfiniteDivergenceError when q puts mass on a category where p has
// exactly none. The result is clamped at 0, which is the true lower bound.
double kl_categorical(std::span<const double> q, std::span<const double> p);

// KL between two truncations; their supports (bounds and outcome grids)
// must match exactly.
double kl_truncated(const TruncatedDistribution& q,
                    const TruncatedDistribution& p);

// Tape version, differentiable with respect to q (typically a softmax of
// learnable logits). p entries are floored at 1e-30 inside the log so
// underflowed reference tails cannot poison the gradient.
Var kl_categorical_on_tape(Var q, std::span<const double> p);

}  // namespace gengs

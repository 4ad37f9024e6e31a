// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "gengs/distributions.hpp"
#include "gengs/random.hpp"
#include "gengs/tape.hpp"

namespace gengs {

struct GumbelMaxSample {
  int index = 0;
  std::vector<double> one_hot;
};

// Hard categorical draw: argmax_k(log pi_k + g_k). Exact zeros in pi are a
// log-domain error; callers sampling from truncations with vanished tails
// must floor first.
GumbelMaxSample gumbel_max(std::span<const double> pi,
                           const GumbelNoise& noise);

// Relaxed draw softmax((log pi + g) / tau) recorded on the tape. The plain
// overload treats pi as fixed; the Var overload differentiates through any
// parameters upstream of pi, flooring entries at 1e-30 before the log so
// underflowed tail categories stay representable.
Var gumbel_softmax(std::span<const double> pi, const GumbelNoise& noise,
                   double tau, Tape& tape);
Var gumbel_softmax(Var pi, const GumbelNoise& noise, double tau);

// Linear outcome map <x, c>: the expectation of the outcome grid under a
// simplex point. On one-hot input it reproduces the discrete outcome.
double transform(std::span<const double> x, std::span<const double> c);

// One relaxed sample through the full pipeline. value = dot(simplex, c).
struct RelaxedSample {
  Var simplex;
  Var value;
  double tau = 1.0;
  GumbelNoise noise;
  std::vector<double> outcomes;
};

RelaxedSample gengs_sample(const TruncatedDistribution& td,
                           const GumbelNoise& noise, double tau, Tape& tape);
RelaxedSample gengs_sample(Var pi, std::span<const double> outcomes,
                           const GumbelNoise& noise, double tau);

// Same relaxed sample with the forward value discretized to the argmax
// outcome; the backward pass is routed through the relaxed value, so its
// adjoints match the relaxed sample's bit for bit.
RelaxedSample straight_through(const RelaxedSample& sample);

// Relaxed multinomial counts: the sum of m independent relaxed categorical
// draws over the same probabilities. Entries sum to m.
Var multinomial_relax(long m, std::span<const double> probs,
                      std::span<const GumbelNoise> noises, double tau,
                      Tape& tape);
Var multinomial_relax(long m, Var probs, std::span<const GumbelNoise> noises,
                      double tau);

// L1 distance between the relaxed draw and the hard one-hot under shared
// noise, computed in log space. Equals 2 * (1 - max coordinate) but stays
// exact far below double rounding of the materialized simplex, where the
// max coordinate would collapse to 1.
double gumbel_softmax_l1_gap(std::span<const double> pi,
                             const GumbelNoise& noise, double tau);

// tau(t) = max(tau_min, tau0 * exp(-decay_rate * t)).
struct TemperatureSchedule {
  double tau0 = 1.0;
  double tau_min = 0.1;
  double decay_rate = 0.0;
};

double temperature(const TemperatureSchedule& schedule, long step);

}  // namespace gengs

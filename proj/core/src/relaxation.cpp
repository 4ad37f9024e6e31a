// SPDX-License-Identifier: Apache-2.0
#include "gengs/relaxation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gengs {
namespace {

constexpr double kPiFloor = 1e-30;

void check_noise(std::size_t categories, const GumbelNoise& noise,
                 const char* who) {
  if (noise.g.size() != categories) {
    throw std::invalid_argument(
        std::string(who) + ": noise length must match category count");
  }
}

void check_tau(double tau, const char* who) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument(std::string(who) + ": tau must be > 0");
  }
}

std::vector<double> perturbed_logits(std::span<const double> pi,
                                     const GumbelNoise& noise,
                                     const char* who) {
  if (pi.empty()) {
    throw std::invalid_argument(std::string(who) + ": empty pi");
  }
  check_noise(pi.size(), noise, who);
  std::vector<double> y(pi.size());
  for (std::size_t k = 0; k < pi.size(); ++k) {
    if (pi[k] == 0.0) {
      throw std::domain_error(
          std::string(who) +
          ": pi contains an exact zero; floor tail categories first");
    }
    y[k] = std::log(std::max(pi[k], kPiFloor)) + noise.g[k];
  }
  return y;
}

}  // namespace

GumbelMaxSample gumbel_max(std::span<const double> pi,
                           const GumbelNoise& noise) {
  const auto y = perturbed_logits(pi, noise, "gumbel_max");
  GumbelMaxSample sample;
  sample.index = static_cast<int>(
      std::max_element(y.begin(), y.end()) - y.begin());
  sample.one_hot.assign(pi.size(), 0.0);
  sample.one_hot[static_cast<std::size_t>(sample.index)] = 1.0;
  return sample;
}

Var gumbel_softmax(std::span<const double> pi, const GumbelNoise& noise,
                   double tau, Tape& tape) {
  check_tau(tau, "gumbel_softmax");
  auto y = perturbed_logits(pi, noise, "gumbel_softmax");
  return tape.softmax_with_temperature(tape.constant(std::move(y)), tau);
}

Var gumbel_softmax(Var pi, const GumbelNoise& noise, double tau) {
  check_tau(tau, "gumbel_softmax");
  check_noise(pi.size(), noise, "gumbel_softmax");
  Tape& tape = *pi.tape();
  const Var logits = tape.log(tape.clamp_min(pi, kPiFloor));
  const Var shifted = tape.add(logits, tape.constant(noise.g));
  return tape.softmax_with_temperature(shifted, tau);
}

double transform(std::span<const double> x, std::span<const double> c) {
  if (x.size() != c.size() || x.empty()) {
    throw std::invalid_argument(
        "transform: simplex and outcome grid lengths must match");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) acc += x[k] * c[k];
  return acc;
}

RelaxedSample gengs_sample(const TruncatedDistribution& td,
                           const GumbelNoise& noise, double tau, Tape& tape) {
  RelaxedSample sample;
  sample.tau = tau;
  sample.noise = noise;
  sample.outcomes = td.c;
  sample.simplex = gumbel_softmax(td.pi, noise, tau, tape);
  sample.value = tape.dot(sample.simplex, tape.constant(td.c));
  return sample;
}

RelaxedSample gengs_sample(Var pi, std::span<const double> outcomes,
                           const GumbelNoise& noise, double tau) {
  if (pi.size() != outcomes.size()) {
    throw std::invalid_argument(
        "gengs_sample: pi and outcome grid lengths must match");
  }
  Tape& tape = *pi.tape();
  RelaxedSample sample;
  sample.tau = tau;
  sample.noise = noise;
  sample.outcomes.assign(outcomes.begin(), outcomes.end());
  sample.simplex = gumbel_softmax(pi, noise, tau);
  sample.value = tape.dot(sample.simplex, tape.constant(sample.outcomes));
  return sample;
}

RelaxedSample straight_through(const RelaxedSample& sample) {
  const auto& s = sample.simplex.values();
  const std::size_t k = static_cast<std::size_t>(
      std::max_element(s.begin(), s.end()) - s.begin());
  RelaxedSample st = sample;
  Tape& tape = *sample.value.tape();
  st.value = tape.st_passthrough(sample.value, sample.outcomes[k]);
  return st;
}

Var multinomial_relax(long m, std::span<const double> probs,
                      std::span<const GumbelNoise> noises, double tau,
                      Tape& tape) {
  if (m < 1 || static_cast<std::size_t>(m) != noises.size()) {
    throw std::invalid_argument(
        "multinomial_relax: need one noise vector per trial");
  }
  Var counts = gumbel_softmax(probs, noises[0], tau, tape);
  for (std::size_t t = 1; t < noises.size(); ++t) {
    counts = tape.add(counts, gumbel_softmax(probs, noises[t], tau, tape));
  }
  return counts;
}

Var multinomial_relax(long m, Var probs, std::span<const GumbelNoise> noises,
                      double tau) {
  if (m < 1 || static_cast<std::size_t>(m) != noises.size()) {
    throw std::invalid_argument(
        "multinomial_relax: need one noise vector per trial");
  }
  Tape& tape = *probs.tape();
  Var counts = gumbel_softmax(probs, noises[0], tau);
  for (std::size_t t = 1; t < noises.size(); ++t) {
    counts = tape.add(counts, gumbel_softmax(probs, noises[t], tau));
  }
  return counts;
}

double gumbel_softmax_l1_gap(std::span<const double> pi,
                             const GumbelNoise& noise, double tau) {
  check_tau(tau, "gumbel_softmax_l1_gap");
  const auto y = perturbed_logits(pi, noise, "gumbel_softmax_l1_gap");
  const double y_max = *std::max_element(y.begin(), y.end());
  // t = sum over non-argmax categories of exp((y_k - y_max) / tau);
  // the L1 gap 2 (1 - s_max) equals 2t / (1 + t).
  double t = 0.0;
  bool max_seen = false;
  for (double yk : y) {
    if (!max_seen && yk == y_max) {
      max_seen = true;
      continue;
    }
    t += std::exp((yk - y_max) / tau);
  }
  return 2.0 * t / (1.0 + t);
}

double temperature(const TemperatureSchedule& schedule, long step) {
  if (!(schedule.tau_min > 0.0)) {
    throw std::invalid_argument("temperature: tau_min must be > 0");
  }
  if (!(schedule.tau0 > 0.0)) {
    throw std::invalid_argument("temperature: tau0 must be > 0");
  }
  if (schedule.decay_rate < 0.0) {
    throw std::invalid_argument("temperature: decay_rate must be >= 0");
  }
  if (step < 0) {
    throw std::invalid_argument("temperature: step must be >= 0");
  }
  return std::max(schedule.tau_min,
                  schedule.tau0 *
                      std::exp(-schedule.decay_rate *
                               static_cast<double>(step)));
}

}  // namespace gengs

// SPDX-License-Identifier: Apache-2.0
#include "gengs/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gengs/errors.hpp"
#include "gengs/numerics.hpp"
#include "gengs/relaxation.hpp"
#include "gengs/divergence.hpp"

namespace gengs {
namespace {

constexpr double kFdStep = 1e-6;
constexpr double kRbRemainderFloor = 1e-12;

int multinomial_dims(const DistributionSpec& spec) {
  return static_cast<int>(spec.params.size()) - 1;
}

int expected_block_size(const DistributionSpec& spec) {
  return spec.family == Family::Multinomial ? multinomial_dims(spec) : 1;
}

void check_objective(const Objective& objective, const DistributionSpec& spec) {
  if (objective.block_size() != expected_block_size(spec)) {
    throw std::invalid_argument(
        "objective block size does not match the distribution family");
  }
  if (objective.latent_count() < 0) {
    throw std::invalid_argument("objective latent count must be >= 0");
  }
}

std::vector<double> outcome_grid(int n) {
  std::vector<double> c(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) c[static_cast<std::size_t>(k)] = k;
  return c;
}

struct TapeParams {
  std::vector<Var> all;
  std::vector<Var> learnable;
};

TapeParams register_params(const DistributionSpec& spec, Tape& tape) {
  TapeParams tp;
  switch (spec.family) {
    case Family::Poisson:
    case Family::Geometric:
    case Family::Bernoulli: {
      const Var v = tape.input(spec.params[0]);
      tp.all = {v};
      tp.learnable = {v};
      return tp;
    }
    case Family::Binomial: {
      const Var n_trials = tape.constant(spec.params[0]);
      const Var p = tape.input(spec.params[1]);
      tp.all = {n_trials, p};
      tp.learnable = {p};
      return tp;
    }
    case Family::NegativeBinomial: {
      const Var r = tape.input(spec.params[0]);
      const Var p = tape.input(spec.params[1]);
      tp.all = {r, p};
      tp.learnable = {r, p};
      return tp;
    }
    case Family::Categorical: {
      for (double p : spec.params) {
        tp.learnable.push_back(tape.input(p));
      }
      tp.all = tp.learnable;
      return tp;
    }
    case Family::Multinomial: {
      tp.all.push_back(tape.constant(spec.params[0]));
      for (std::size_t j = 1; j < spec.params.size(); ++j) {
        const Var p = tape.input(spec.params[j]);
        tp.all.push_back(p);
        tp.learnable.push_back(p);
      }
      return tp;
    }
  }
  throw std::invalid_argument("register_params: unknown family");
}

std::vector<double> collect_adjoints(const std::vector<Var>& learnable) {
  std::vector<double> grad;
  grad.reserve(learnable.size());
  for (const Var& v : learnable) grad.push_back(v.adjoint());
  return grad;
}

GradEstimate empty_estimate(const ParamSpace& ps, std::uint64_t seed) {
  GradEstimate out;
  out.grad.assign(static_cast<std::size_t>(ps.count()), 0.0);
  out.seed = seed;
  return out;
}

// Truncated probability vector straight from raw parameters, mirroring
// truncate() without validation or clamping; finite differences stay
// smooth through it.
std::vector<double> truncated_pi_raw(Family family,
                                     std::span<const double> params, int n) {
  std::vector<double> pi(static_cast<std::size_t>(n));
  double head = 0.0;
  for (int k = 0; k < n - 1; ++k) {
    pi[static_cast<std::size_t>(k)] = pmf_unchecked(family, params, k);
    head += pi[static_cast<std::size_t>(k)];
  }
  pi[static_cast<std::size_t>(n - 1)] = 1.0 - head;
  return pi;
}

}  // namespace

double Objective::value(std::span<const double> z) const {
  if (static_cast<int>(z.size()) != dim()) {
    throw std::invalid_argument("Objective::value: wrong sample length");
  }
  const int b = block_size();
  double total = 0.0;
  for (int i = 0; i < latent_count(); ++i) {
    total += block_value(i, z.subspan(static_cast<std::size_t>(i) *
                                          static_cast<std::size_t>(b),
                                      static_cast<std::size_t>(b)));
  }
  return total;
}

SquaredErrorObjective::SquaredErrorObjective(std::vector<double> targets,
                                             int block_size)
    : targets_(std::move(targets)), block_size_(block_size) {
  if (block_size_ < 1) {
    throw std::invalid_argument(
        "SquaredErrorObjective: block size must be >= 1");
  }
  if (targets_.size() % static_cast<std::size_t>(block_size_) != 0) {
    throw std::invalid_argument(
        "SquaredErrorObjective: targets must fill whole blocks");
  }
  latent_count_ = static_cast<int>(targets_.size()) / block_size_;
}

double SquaredErrorObjective::block_value(
    int i, std::span<const double> z_block) const {
  if (static_cast<int>(z_block.size()) != block_size_) {
    throw std::invalid_argument("block_value: wrong block length");
  }
  double total = 0.0;
  for (int j = 0; j < block_size_; ++j) {
    const double diff =
        z_block[static_cast<std::size_t>(j)] -
        targets_[static_cast<std::size_t>(i * block_size_ + j)];
    total += diff * diff;
  }
  return total;
}

Var SquaredErrorObjective::block_value_on_tape(int i, Var z_block,
                                               Tape& tape) const {
  if (static_cast<int>(z_block.size()) != block_size_) {
    throw std::invalid_argument("block_value_on_tape: wrong block length");
  }
  const auto first = targets_.begin() + static_cast<std::ptrdiff_t>(i) *
                                            block_size_;
  const Var t = tape.constant(std::vector<double>(first, first + block_size_));
  const Var diff = tape.sub(z_block, t);
  return tape.sum(tape.mul(diff, diff));
}

ParamSpace::ParamSpace(const DistributionSpec& spec) : family_(spec.family) {
  validate(spec);
  switch (spec.family) {
    case Family::Poisson:
      names_ = {"lambda"};
      map_ = Map::Softplus;
      return;
    case Family::Binomial:
    case Family::Geometric:
    case Family::Bernoulli:
      names_ = {"p"};
      map_ = Map::Logistic;
      return;
    case Family::NegativeBinomial:
      // r rides softplus, p logistic; handled entrywise below.
      names_ = {"r", "p"};
      map_ = Map::Softplus;
      return;
    case Family::Categorical: {
      for (std::size_t j = 0; j < spec.params.size(); ++j) {
        names_.push_back("p" + std::to_string(j));
      }
      map_ = Map::Softmax;
      return;
    }
    case Family::Multinomial: {
      for (std::size_t j = 0; j + 1 < spec.params.size(); ++j) {
        names_.push_back("p" + std::to_string(j));
      }
      map_ = Map::Softmax;
      return;
    }
  }
  throw std::invalid_argument("ParamSpace: unknown family");
}

std::vector<double> ParamSpace::natural(const DistributionSpec& spec) const {
  switch (family_) {
    case Family::Poisson:
    case Family::Geometric:
    case Family::Bernoulli:
      return {spec.params[0]};
    case Family::Binomial:
      return {spec.params[1]};
    case Family::NegativeBinomial:
      return {spec.params[0], spec.params[1]};
    case Family::Categorical:
      return spec.params;
    case Family::Multinomial:
      return {spec.params.begin() + 1, spec.params.end()};
  }
  throw std::invalid_argument("ParamSpace::natural: unknown family");
}

DistributionSpec ParamSpace::with_natural(
    const DistributionSpec& base, std::span<const double> natural) const {
  if (static_cast<int>(natural.size()) != count()) {
    throw std::invalid_argument("with_natural: wrong parameter count");
  }
  DistributionSpec spec = base;
  switch (family_) {
    case Family::Poisson:
    case Family::Geometric:
    case Family::Bernoulli:
      spec.params[0] = natural[0];
      break;
    case Family::Binomial:
      spec.params[1] = natural[0];
      break;
    case Family::NegativeBinomial:
      spec.params[0] = natural[0];
      spec.params[1] = natural[1];
      break;
    case Family::Categorical:
      spec.params.assign(natural.begin(), natural.end());
      break;
    case Family::Multinomial:
      std::copy(natural.begin(), natural.end(), spec.params.begin() + 1);
      break;
  }
  validate(spec);
  return spec;
}

std::vector<double> ParamSpace::to_preimage(
    std::span<const double> natural) const {
  std::vector<double> pre(natural.begin(), natural.end());
  if (map_ == Map::Softmax) {
    for (double& x : pre) x = std::log(x);
    return pre;
  }
  for (int j = 0; j < count(); ++j) {
    const bool positive_map =
        family_ == Family::Poisson ||
        (family_ == Family::NegativeBinomial && j == 0);
    pre[static_cast<std::size_t>(j)] =
        positive_map ? softplus_inverse(natural[static_cast<std::size_t>(j)])
                     : logit(natural[static_cast<std::size_t>(j)]);
  }
  return pre;
}

std::vector<double> ParamSpace::from_preimage(
    std::span<const double> preimage) const {
  std::vector<double> nat(preimage.begin(), preimage.end());
  if (map_ == Map::Softmax) {
    const double top = *std::max_element(nat.begin(), nat.end());
    double denom = 0.0;
    for (double& x : nat) {
      x = std::exp(x - top);
      denom += x;
    }
    for (double& x : nat) x /= denom;
    return nat;
  }
  for (int j = 0; j < count(); ++j) {
    const bool positive_map =
        family_ == Family::Poisson ||
        (family_ == Family::NegativeBinomial && j == 0);
    nat[static_cast<std::size_t>(j)] =
        positive_map ? softplus(preimage[static_cast<std::size_t>(j)])
                     : sigmoid(preimage[static_cast<std::size_t>(j)]);
  }
  return nat;
}

std::vector<double> ParamSpace::preimage_grad(
    std::span<const double> preimage,
    std::span<const double> natural_grad) const {
  if (static_cast<int>(preimage.size()) != count() ||
      static_cast<int>(natural_grad.size()) != count()) {
    throw std::invalid_argument("preimage_grad: wrong length");
  }
  const auto nat = from_preimage(preimage);
  std::vector<double> out(natural_grad.size());
  if (map_ == Map::Softmax) {
    double inner = 0.0;
    for (std::size_t j = 0; j < nat.size(); ++j) {
      inner += nat[j] * natural_grad[j];
    }
    for (std::size_t j = 0; j < nat.size(); ++j) {
      out[j] = nat[j] * (natural_grad[j] - inner);
    }
    return out;
  }
  for (int j = 0; j < count(); ++j) {
    const std::size_t sj = static_cast<std::size_t>(j);
    const bool positive_map =
        family_ == Family::Poisson ||
        (family_ == Family::NegativeBinomial && j == 0);
    const double slope = positive_map
                             ? sigmoid(preimage[sj])
                             : nat[sj] * (1.0 - nat[sj]);
    out[sj] = natural_grad[sj] * slope;
  }
  return out;
}

std::vector<std::vector<long>> enumerate_count_vectors(long m, int d) {
  if (m < 0 || d < 1) {
    throw std::invalid_argument("enumerate_count_vectors: need m >= 0, d >= 1");
  }
  std::vector<std::vector<long>> out;
  std::vector<long> current(static_cast<std::size_t>(d), 0);
  const std::function<void(int, long)> fill = [&](int slot, long remaining) {
    if (slot == d - 1) {
      current[static_cast<std::size_t>(slot)] = remaining;
      out.push_back(current);
      return;
    }
    for (long x = 0; x <= remaining; ++x) {
      current[static_cast<std::size_t>(slot)] = x;
      fill(slot + 1, remaining - x);
    }
  };
  fill(0, m);
  return out;
}

double enumerated_objective(const Objective& objective,
                            const DistributionSpec& spec, int n) {
  validate(spec);
  check_objective(objective, spec);
  const int K = objective.latent_count();
  if (K == 0) return 0.0;

  double total = 0.0;
  if (spec.family == Family::Multinomial) {
    const long m = static_cast<long>(spec.params[0]);
    const int d = multinomial_dims(spec);
    const std::span<const double> probs{spec.params.data() + 1,
                                        static_cast<std::size_t>(d)};
    for (const auto& counts : enumerate_count_vectors(m, d)) {
      const double w = multinomial_pmf(m, probs, counts);
      std::vector<double> block(counts.begin(), counts.end());
      for (int i = 0; i < K; ++i) {
        total += w * objective.block_value(i, block);
      }
    }
    return total;
  }

  const TruncatedDistribution td = truncate(spec, n);
  for (std::size_t k = 0; k < td.pi.size(); ++k) {
    const double c_k = td.c[k];
    for (int i = 0; i < K; ++i) {
      total += td.pi[k] * objective.block_value(i, {&c_k, 1});
    }
  }
  return total;
}

GradEstimate exact_gradient(const Objective& objective,
                            const DistributionSpec& spec, int n) {
  validate(spec);
  check_objective(objective, spec);
  const ParamSpace ps(spec);
  const int K = objective.latent_count();

  GradEstimate out = empty_estimate(ps, 0);
  out.loss_value = enumerated_objective(objective, spec, n);
  if (K == 0) return out;

  if (spec.family == Family::Multinomial) {
    const long m = static_cast<long>(spec.params[0]);
    const int d = multinomial_dims(spec);
    const auto outcomes = enumerate_count_vectors(m, d);
    for (int j = 0; j < ps.count(); ++j) {
      std::vector<double> lo(spec.params.begin() + 1, spec.params.end());
      std::vector<double> hi = lo;
      lo[static_cast<std::size_t>(j)] -= kFdStep;
      hi[static_cast<std::size_t>(j)] += kFdStep;
      double grad = 0.0;
      for (const auto& counts : outcomes) {
        const double dw = (multinomial_pmf(m, hi, counts) -
                           multinomial_pmf(m, lo, counts)) /
                          (2.0 * kFdStep);
        std::vector<double> block(counts.begin(), counts.end());
        for (int i = 0; i < K; ++i) {
          grad += dw * objective.block_value(i, block);
        }
      }
      out.grad[static_cast<std::size_t>(j)] = grad;
    }
    return out;
  }

  const TruncatedDistribution td = truncate(spec, n);
  // Per-category objective sums, shared across parameters.
  std::vector<double> f_sum(td.pi.size(), 0.0);
  for (std::size_t k = 0; k < td.pi.size(); ++k) {
    const double c_k = td.c[k];
    for (int i = 0; i < K; ++i) {
      f_sum[k] += objective.block_value(i, {&c_k, 1});
    }
  }

  if (spec.family == Family::Poisson) {
    // d pmf(k)/d lambda = pmf(k-1) - pmf(k); the folded category's
    // derivative is the negated sum of the others.
    double grad = 0.0;
    double dsum = 0.0;
    for (int k = 0; k + 1 < n; ++k) {
      const double dpi = (k == 0 ? 0.0 : pmf(spec, k - 1)) - pmf(spec, k);
      grad += dpi * f_sum[static_cast<std::size_t>(k)];
      dsum += dpi;
    }
    grad += -dsum * f_sum[static_cast<std::size_t>(n - 1)];
    out.grad[0] = grad;
    return out;
  }

  for (int j = 0; j < ps.count(); ++j) {
    std::vector<double> lo = spec.params;
    std::vector<double> hi = spec.params;
    const std::size_t pj = static_cast<std::size_t>(
        spec.family == Family::Binomial ? 1 : j);
    lo[pj] -= kFdStep;
    hi[pj] += kFdStep;
    const auto pi_lo = truncated_pi_raw(spec.family, lo, n);
    const auto pi_hi = truncated_pi_raw(spec.family, hi, n);
    double grad = 0.0;
    for (std::size_t k = 0; k < f_sum.size(); ++k) {
      grad += (pi_hi[k] - pi_lo[k]) / (2.0 * kFdStep) * f_sum[k];
    }
    out.grad[static_cast<std::size_t>(j)] = grad;
  }
  return out;
}

GradEstimate gengs_explicit(const Objective& objective,
                            const DistributionSpec& spec, int n, double tau,
                            NoiseSource& source) {
  validate(spec);
  check_objective(objective, spec);
  const ParamSpace ps(spec);
  const int K = objective.latent_count();
  if (K == 0) return empty_estimate(ps, source.seed());

  Tape tape;
  const TapeParams tp = register_params(spec, tape);
  Var loss;

  if (spec.family == Family::Multinomial) {
    const long m = static_cast<long>(spec.params[0]);
    const int d = multinomial_dims(spec);
    const Var probs = tape.stack(tp.learnable);
    for (int i = 0; i < K; ++i) {
      std::vector<GumbelNoise> noises;
      noises.reserve(static_cast<std::size_t>(m));
      for (long t = 0; t < m; ++t) {
        noises.push_back(sample_gumbel_vector(source, d));
      }
      const Var counts = multinomial_relax(m, probs, noises, tau);
      const Var block = objective.block_value_on_tape(i, counts, tape);
      loss = (i == 0) ? block : tape.add(loss, block);
    }
  } else {
    const Var pi = truncate_on_tape(spec.family, tp.all, n, tape);
    const auto c = outcome_grid(n);
    for (int i = 0; i < K; ++i) {
      const GumbelNoise noise = sample_gumbel_vector(source, n);
      const RelaxedSample rs = gengs_sample(pi, c, noise, tau);
      const Var z_block = tape.stack({&rs.value, 1});
      const Var block = objective.block_value_on_tape(i, z_block, tape);
      loss = (i == 0) ? block : tape.add(loss, block);
    }
  }

  tape.backward(loss);
  GradEstimate out;
  out.grad = collect_adjoints(tp.learnable);
  out.loss_value = loss.value();
  out.sample_count = K;
  out.seed = source.seed();
  return out;
}

GradEstimate st_gengs(const Objective& objective, const DistributionSpec& spec,
                      int n, double tau, NoiseSource& source) {
  validate(spec);
  check_objective(objective, spec);
  const ParamSpace ps(spec);
  const int K = objective.latent_count();
  if (K == 0) return empty_estimate(ps, source.seed());

  Tape tape;
  const TapeParams tp = register_params(spec, tape);
  Var loss;

  if (spec.family == Family::Multinomial) {
    const long m = static_cast<long>(spec.params[0]);
    const int d = multinomial_dims(spec);
    const Var probs = tape.stack(tp.learnable);
    for (int i = 0; i < K; ++i) {
      Var counts;
      for (long t = 0; t < m; ++t) {
        const GumbelNoise noise = sample_gumbel_vector(source, d);
        const Var s = gumbel_softmax(probs, noise, tau);
        // Additive straight-through: forward snaps to the one-hot winner,
        // backward sees the relaxed simplex's Jacobian unchanged.
        const auto& sv = s.values();
        std::vector<double> shift(sv.size(), 0.0);
        const std::size_t winner = static_cast<std::size_t>(
            std::max_element(sv.begin(), sv.end()) - sv.begin());
        for (std::size_t j = 0; j < sv.size(); ++j) shift[j] = -sv[j];
        shift[winner] += 1.0;
        const Var hard = tape.add(s, tape.constant(std::move(shift)));
        counts = (t == 0) ? hard : tape.add(counts, hard);
      }
      const Var block = objective.block_value_on_tape(i, counts, tape);
      loss = (i == 0) ? block : tape.add(loss, block);
    }
  } else {
    const Var pi = truncate_on_tape(spec.family, tp.all, n, tape);
    const auto c = outcome_grid(n);
    for (int i = 0; i < K; ++i) {
      const GumbelNoise noise = sample_gumbel_vector(source, n);
      const RelaxedSample hard = straight_through(gengs_sample(pi, c, noise, tau));
      const Var z_block = tape.stack({&hard.value, 1});
      const Var block = objective.block_value_on_tape(i, z_block, tape);
      loss = (i == 0) ? block : tape.add(loss, block);
    }
  }

  tape.backward(loss);
  GradEstimate out;
  out.grad = collect_adjoints(tp.learnable);
  out.loss_value = loss.value();
  out.sample_count = K;
  out.seed = source.seed();
  return out;
}

GradEstimate gengs_rb(const Objective& objective, const DistributionSpec& spec,
                      int n, double tau, NoiseSource& source) {
  validate(spec);
  if (spec.family == Family::Multinomial) {
    throw UnsupportedFamilyError(
        "gengs_rb: top-category decomposition needs a scalar support");
  }
  check_objective(objective, spec);
  const ParamSpace ps(spec);
  const int K = objective.latent_count();
  if (K == 0) return empty_estimate(ps, source.seed());

  Tape tape;
  const TapeParams tp = register_params(spec, tape);
  const Var pi = truncate_on_tape(spec.family, tp.all, n, tape);
  const auto c = outcome_grid(n);
  const auto& pi_values = pi.values();
  const int k_star = static_cast<int>(
      std::max_element(pi_values.begin(), pi_values.end()) -
      pi_values.begin());
  const double remainder_mass = 1.0 - pi_values[static_cast<std::size_t>(k_star)];

  const Var p_star = tape.index(pi, k_star);
  const double c_star = c[static_cast<std::size_t>(k_star)];

  Var rest;
  std::vector<double> c_rest;
  Var weight;
  if (remainder_mass >= kRbRemainderFloor) {
    std::vector<int> keep;
    keep.reserve(static_cast<std::size_t>(n - 1));
    for (int k = 0; k < n; ++k) {
      if (k != k_star) {
        keep.push_back(k);
        c_rest.push_back(c[static_cast<std::size_t>(k)]);
      }
    }
    weight = 1.0 - p_star;
    rest = tape.scale(1.0 / weight, tape.gather(pi, keep));
  }

  Var loss;
  for (int i = 0; i < K; ++i) {
    const double f_star = objective.block_value(i, {&c_star, 1});
    Var term = p_star * f_star;
    if (remainder_mass >= kRbRemainderFloor) {
      GumbelNoise noise = sample_gumbel_vector(source, n);
      GumbelNoise noise_rest;
      noise_rest.g.reserve(static_cast<std::size_t>(n - 1));
      for (int k = 0; k < n; ++k) {
        if (k != k_star) {
          noise_rest.g.push_back(noise.g[static_cast<std::size_t>(k)]);
        }
      }
      const RelaxedSample rs = gengs_sample(rest, c_rest, noise_rest, tau);
      const Var z_block = tape.stack({&rs.value, 1});
      term = tape.add(
          term,
          tape.mul(weight, objective.block_value_on_tape(i, z_block, tape)));
    }
    loss = (i == 0) ? term : tape.add(loss, term);
  }

  tape.backward(loss);
  GradEstimate out;
  out.grad = collect_adjoints(tp.learnable);
  out.loss_value = loss.value();
  out.sample_count = remainder_mass >= kRbRemainderFloor ? K : 0;
  out.seed = source.seed();
  return out;
}

GradEstimate gengs_implicit(const Objective& objective,
                            std::span<const double> logits,
                            const TruncatedDistribution& prior, double tau,
                            double kl_weight, NoiseSource& source) {
  if (prior.pi.size() < 2 || prior.pi.size() != prior.c.size()) {
    throw std::invalid_argument("gengs_implicit: malformed prior");
  }
  if (logits.size() != prior.pi.size()) {
    throw std::invalid_argument(
        "gengs_implicit: logits length must match the prior support");
  }
  if (kl_weight < 0.0) {
    throw std::invalid_argument("gengs_implicit: kl_weight must be >= 0");
  }
  if (objective.block_size() != 1) {
    throw std::invalid_argument(
        "gengs_implicit: requires a scalar-outcome objective");
  }

  Tape tape;
  const Var logit_var = tape.input(std::vector<double>(logits.begin(), logits.end()));
  const Var q = tape.softmax_with_temperature(logit_var, 1.0);
  Var loss = kl_weight * kl_categorical_on_tape(q, prior.pi);

  const int K = objective.latent_count();
  const int n = static_cast<int>(prior.pi.size());
  for (int i = 0; i < K; ++i) {
    const GumbelNoise noise = sample_gumbel_vector(source, n);
    const RelaxedSample rs = gengs_sample(q, prior.c, noise, tau);
    const Var z_block = tape.stack({&rs.value, 1});
    loss = tape.add(loss, objective.block_value_on_tape(i, z_block, tape));
  }

  tape.backward(loss);
  GradEstimate out;
  out.grad = logit_var.adjoints();
  out.loss_value = loss.value();
  out.sample_count = K;
  out.seed = source.seed();
  return out;
}

void RunningMeanBaseline::update(double f) {
  if (!initialized_) {
    mean_ = f;
    initialized_ = true;
    return;
  }
  mean_ = 0.9 * mean_ + 0.1 * f;
}

std::vector<double> score_function(const DistributionSpec& spec,
                                   std::span<const long> sample) {
  validate(spec);
  if (spec.family == Family::Multinomial) {
    const int d = multinomial_dims(spec);
    if (static_cast<int>(sample.size()) != d) {
      throw std::invalid_argument("score_function: wrong count vector length");
    }
    std::vector<double> score(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      score[static_cast<std::size_t>(j)] =
          static_cast<double>(sample[static_cast<std::size_t>(j)]) /
          spec.params[static_cast<std::size_t>(j) + 1];
    }
    return score;
  }

  if (sample.size() != 1) {
    throw std::invalid_argument(
        "score_function: scalar families take a single outcome");
  }
  const double k = static_cast<double>(sample[0]);
  switch (spec.family) {
    case Family::Poisson: {
      const double lambda = spec.params[0];
      return {k / lambda - 1.0};
    }
    case Family::Binomial: {
      const double n = spec.params[0];
      const double p = spec.params[1];
      return {k / p - (n - k) / (1.0 - p)};
    }
    case Family::Geometric: {
      const double p = spec.params[0];
      return {1.0 / p - k / (1.0 - p)};
    }
    case Family::NegativeBinomial: {
      const double r = spec.params[0];
      const double p = spec.params[1];
      return {digamma(k + r) - digamma(r) + std::log(p),
              r / p - k / (1.0 - p)};
    }
    case Family::Bernoulli: {
      const double p = spec.params[0];
      return {sample[0] == 1 ? 1.0 / p : -1.0 / (1.0 - p)};
    }
    case Family::Categorical: {
      std::vector<double> score(spec.params.size(), 0.0);
      const std::size_t k_idx = static_cast<std::size_t>(sample[0]);
      if (k_idx >= spec.params.size()) {
        throw std::invalid_argument("score_function: outcome off support");
      }
      score[k_idx] = 1.0 / spec.params[k_idx];
      return score;
    }
    case Family::Multinomial:
      break;
  }
  throw std::invalid_argument("score_function: unknown family");
}

GradEstimate reinforce(const Objective& objective,
                       const DistributionSpec& spec, NoiseSource& source,
                       RunningMeanBaseline* baseline) {
  validate(spec);
  check_objective(objective, spec);
  const ParamSpace ps(spec);
  const int K = objective.latent_count();
  GradEstimate out = empty_estimate(ps, source.seed());
  if (K == 0) return out;

  std::vector<double> z;
  z.reserve(static_cast<std::size_t>(objective.dim()));
  std::vector<double> score(static_cast<std::size_t>(ps.count()), 0.0);

  for (int i = 0; i < K; ++i) {
    std::vector<long> block;
    if (spec.family == Family::Multinomial) {
      block = sample_counts(spec, source);
    } else {
      block = {sample_scalar(spec, source)};
    }
    const auto s = score_function(spec, block);
    for (std::size_t j = 0; j < s.size(); ++j) score[j] += s[j];
    for (long x : block) z.push_back(static_cast<double>(x));
  }

  const double f = objective.value(z);
  const double b = baseline != nullptr ? baseline->value() : 0.0;
  for (std::size_t j = 0; j < score.size(); ++j) {
    out.grad[j] = (f - b) * score[j];
  }
  if (baseline != nullptr) baseline->update(f);
  out.loss_value = f;
  out.sample_count = K;
  return out;
}

MomentStats estimate_moments(const std::function<GradEstimate(int)>& run,
                             int repeats, const GradEstimate* exact) {
  if (repeats < 2) {
    throw std::invalid_argument("estimate_moments: repeats must be >= 2");
  }

  MomentStats stats;
  std::vector<double> m2;
  for (int r = 0; r < repeats; ++r) {
    const GradEstimate est = run(r);
    if (r == 0) {
      stats.mean.assign(est.grad.size(), 0.0);
      stats.variance.assign(est.grad.size(), 0.0);
      m2.assign(est.grad.size(), 0.0);
    }
    if (est.grad.size() != stats.mean.size()) {
      throw std::invalid_argument(
          "estimate_moments: inconsistent gradient lengths");
    }
    // Welford update per component.
    const double count = static_cast<double>(r + 1);
    for (std::size_t j = 0; j < est.grad.size(); ++j) {
      const double delta = est.grad[j] - stats.mean[j];
      stats.mean[j] += delta / count;
      m2[j] += delta * (est.grad[j] - stats.mean[j]);
    }
    stats.loss_mean += (est.loss_value - stats.loss_mean) / count;
  }
  for (std::size_t j = 0; j < stats.mean.size(); ++j) {
    stats.variance[j] = m2[j] / static_cast<double>(repeats - 1);
  }
  if (exact != nullptr) {
    if (exact->grad.size() != stats.mean.size()) {
      throw std::invalid_argument(
          "estimate_moments: exact reference has the wrong length");
    }
    stats.bias.resize(stats.mean.size());
    for (std::size_t j = 0; j < stats.mean.size(); ++j) {
      stats.bias[j] = stats.mean[j] - exact->grad[j];
    }
  }
  return stats;
}

}  // namespace gengs

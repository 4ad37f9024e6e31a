// SPDX-License-Identifier: Apache-2.0
#include "gengs/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gengs/errors.hpp"
#include "gengs/numerics.hpp"

namespace gengs {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSimplexTolerance = 1e-9;
// Stop enumerating a source distribution once this much mass is covered.
constexpr double kTailExhaustion = 1.0 - 1e-12;
constexpr long kEnumerationCap = 1000000;

void require(bool ok, const char* message) {
  if (!ok) throw ParameterError(message);
}

bool is_integral(double x) { return x == std::floor(x) && std::isfinite(x); }

void check_simplex(std::span<const double> probs, const char* who) {
  if (probs.size() < 2) {
    throw ParameterError(std::string(who) +
                         ": probability vector needs at least 2 entries");
  }
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !(p <= 1.0)) {
      throw ParameterError(std::string(who) +
                           ": probabilities must lie in [0, 1]");
    }
    total += p;
  }
  if (std::fabs(total - 1.0) > kSimplexTolerance) {
    throw ParameterError(std::string(who) +
                         ": probabilities must sum to 1 within 1e-9");
  }
}

std::span<const double> categorical_probs(const DistributionSpec& spec) {
  return {spec.params.data(), spec.params.size()};
}

std::span<const double> multinomial_probs(const DistributionSpec& spec) {
  return {spec.params.data() + 1, spec.params.size() - 1};
}

[[noreturn]] void reject_multinomial(const char* op) {
  throw UnsupportedFamilyError(
      std::string(op) +
      ": Multinomial is vector-valued; its relaxation composes per-trial "
      "categorical draws instead of a scalar truncation");
}

}  // namespace

std::string family_name(Family family) {
  switch (family) {
    case Family::Poisson: return "poisson";
    case Family::Binomial: return "binomial";
    case Family::Geometric: return "geometric";
    case Family::NegativeBinomial: return "negbin";
    case Family::Bernoulli: return "bernoulli";
    case Family::Categorical: return "categorical";
    case Family::Multinomial: return "multinomial";
  }
  throw std::invalid_argument("family_name: unknown family");
}

DistributionSpec DistributionSpec::poisson(double lambda) {
  DistributionSpec spec{Family::Poisson, {lambda}};
  validate(spec);
  return spec;
}

DistributionSpec DistributionSpec::binomial(long n_trials, double p) {
  DistributionSpec spec{Family::Binomial, {static_cast<double>(n_trials), p}};
  validate(spec);
  return spec;
}

DistributionSpec DistributionSpec::geometric(double p) {
  DistributionSpec spec{Family::Geometric, {p}};
  validate(spec);
  return spec;
}

DistributionSpec DistributionSpec::negative_binomial(double r, double p) {
  DistributionSpec spec{Family::NegativeBinomial, {r, p}};
  validate(spec);
  return spec;
}

DistributionSpec DistributionSpec::bernoulli(double p) {
  DistributionSpec spec{Family::Bernoulli, {p}};
  validate(spec);
  return spec;
}

DistributionSpec DistributionSpec::categorical(std::vector<double> probs) {
  DistributionSpec spec{Family::Categorical, std::move(probs)};
  validate(spec);
  return spec;
}

DistributionSpec DistributionSpec::multinomial(long m_trials,
                                               std::vector<double> probs) {
  DistributionSpec spec{Family::Multinomial, {}};
  spec.params.reserve(probs.size() + 1);
  spec.params.push_back(static_cast<double>(m_trials));
  spec.params.insert(spec.params.end(), probs.begin(), probs.end());
  validate(spec);
  return spec;
}

void validate(const DistributionSpec& spec) {
  switch (spec.family) {
    case Family::Poisson:
      require(spec.params.size() == 1, "poisson: expected params {lambda}");
      require(spec.params[0] > 0.0 && std::isfinite(spec.params[0]),
              "poisson: lambda must be strictly positive");
      return;
    case Family::Binomial:
      require(spec.params.size() == 2, "binomial: expected params {n, p}");
      require(is_integral(spec.params[0]) && spec.params[0] >= 1.0,
              "binomial: n must be a positive integer");
      require(spec.params[1] > 0.0 && spec.params[1] < 1.0,
              "binomial: p must lie in (0, 1)");
      return;
    case Family::Geometric:
      require(spec.params.size() == 1, "geometric: expected params {p}");
      require(spec.params[0] > 0.0 && spec.params[0] < 1.0,
              "geometric: p must lie in (0, 1)");
      return;
    case Family::NegativeBinomial:
      require(spec.params.size() == 2, "negbin: expected params {r, p}");
      require(spec.params[0] > 0.0 && std::isfinite(spec.params[0]),
              "negbin: r must be strictly positive");
      require(spec.params[1] > 0.0 && spec.params[1] < 1.0,
              "negbin: p must lie in (0, 1)");
      return;
    case Family::Bernoulli:
      require(spec.params.size() == 1, "bernoulli: expected params {p}");
      require(spec.params[0] > 0.0 && spec.params[0] < 1.0,
              "bernoulli: p must lie in (0, 1)");
      return;
    case Family::Categorical:
      check_simplex(categorical_probs(spec), "categorical");
      return;
    case Family::Multinomial:
      require(spec.params.size() >= 3,
              "multinomial: expected params {m, p_0, ..., p_{d-1}}");
      require(is_integral(spec.params[0]) && spec.params[0] >= 1.0,
              "multinomial: m must be a positive integer");
      check_simplex(multinomial_probs(spec), "multinomial");
      return;
  }
  throw ParameterError("validate: unknown family");
}

namespace {

double log_pmf_unchecked(Family family, std::span<const double> params,
                         long k) {
  if (k < 0) return -kInf;
  const double kd = static_cast<double>(k);
  switch (family) {
    case Family::Poisson: {
      const double lambda = params[0];
      return kd * std::log(lambda) - lambda - std::lgamma(kd + 1.0);
    }
    case Family::Binomial: {
      const double n = params[0];
      const double p = params[1];
      if (kd > n) return -kInf;
      return log_choose(n, kd) + kd * std::log(p) +
             (n - kd) * std::log1p(-p);
    }
    case Family::Geometric: {
      const double p = params[0];
      return kd * std::log1p(-p) + std::log(p);
    }
    case Family::NegativeBinomial: {
      const double r = params[0];
      const double p = params[1];
      return std::lgamma(kd + r) - std::lgamma(r) - std::lgamma(kd + 1.0) +
             r * std::log(p) + kd * std::log1p(-p);
    }
    case Family::Bernoulli: {
      const double p = params[0];
      if (k == 0) return std::log1p(-p);
      if (k == 1) return std::log(p);
      return -kInf;
    }
    case Family::Categorical: {
      if (static_cast<std::size_t>(k) >= params.size()) return -kInf;
      return std::log(params[static_cast<std::size_t>(k)]);
    }
    case Family::Multinomial:
      reject_multinomial("log_pmf");
  }
  throw ParameterError("log_pmf: unknown family");
}

}  // namespace

double log_pmf(const DistributionSpec& spec, long k) {
  validate(spec);
  return log_pmf_unchecked(spec.family, spec.params, k);
}

double pmf(const DistributionSpec& spec, long k) {
  const double lp = log_pmf(spec, k);
  return lp == -kInf ? 0.0 : std::exp(lp);
}

double pmf_unchecked(Family family, std::span<const double> params, long k) {
  const double lp = log_pmf_unchecked(family, params, k);
  return lp == -kInf ? 0.0 : std::exp(lp);
}

double multinomial_pmf(long m, std::span<const double> probs,
                       std::span<const long> counts) {
  if (probs.size() != counts.size() || probs.empty()) {
    throw std::invalid_argument(
        "multinomial_pmf: probs and counts lengths must match");
  }
  // Off-support count vectors have zero mass, matching the scalar pmf.
  long total = 0;
  double log_mass = std::lgamma(static_cast<double>(m) + 1.0);
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] < 0) return 0.0;
    total += counts[j];
    const double xj = static_cast<double>(counts[j]);
    log_mass -= std::lgamma(xj + 1.0);
    if (counts[j] > 0) log_mass += xj * std::log(probs[j]);
  }
  if (total != m) return 0.0;
  return std::exp(log_mass);
}

double cdf(const DistributionSpec& spec, long k) {
  validate(spec);
  if (spec.family == Family::Multinomial) reject_multinomial("cdf");
  if (k < 0) return 0.0;
  double total = 0.0;
  for (long j = 0; j <= k; ++j) total += pmf(spec, j);
  return std::min(total, 1.0);
}

double mean(const DistributionSpec& spec) {
  validate(spec);
  switch (spec.family) {
    case Family::Poisson:
      return spec.params[0];
    case Family::Binomial:
      return spec.params[0] * spec.params[1];
    case Family::Geometric:
      return (1.0 - spec.params[0]) / spec.params[0];
    case Family::NegativeBinomial:
      return spec.params[0] * (1.0 - spec.params[1]) / spec.params[1];
    case Family::Bernoulli:
      return spec.params[0];
    case Family::Categorical: {
      double m = 0.0;
      const auto probs = categorical_probs(spec);
      for (std::size_t k = 0; k < probs.size(); ++k) {
        m += static_cast<double>(k) * probs[k];
      }
      return m;
    }
    case Family::Multinomial:
      reject_multinomial("mean");
  }
  throw ParameterError("mean: unknown family");
}

double variance(const DistributionSpec& spec) {
  validate(spec);
  switch (spec.family) {
    case Family::Poisson:
      return spec.params[0];
    case Family::Binomial:
      return spec.params[0] * spec.params[1] * (1.0 - spec.params[1]);
    case Family::Geometric: {
      const double p = spec.params[0];
      return (1.0 - p) / (p * p);
    }
    case Family::NegativeBinomial: {
      const double r = spec.params[0];
      const double p = spec.params[1];
      return r * (1.0 - p) / (p * p);
    }
    case Family::Bernoulli:
      return spec.params[0] * (1.0 - spec.params[0]);
    case Family::Categorical: {
      double m = 0.0;
      double m2 = 0.0;
      const auto probs = categorical_probs(spec);
      for (std::size_t k = 0; k < probs.size(); ++k) {
        const double kd = static_cast<double>(k);
        m += kd * probs[k];
        m2 += kd * kd * probs[k];
      }
      return m2 - m * m;
    }
    case Family::Multinomial:
      reject_multinomial("variance");
  }
  throw ParameterError("variance: unknown family");
}

Truncatability truncatability(const DistributionSpec& spec) {
  validate(spec);
  // Multinomial has finite support, hence finite moments of every order.
  if (spec.family == Family::Multinomial) return Truncatability::TwoSided;
  const double m = mean(spec);
  if (!std::isfinite(m)) return Truncatability::NotTruncatable;
  return std::isfinite(variance(spec)) ? Truncatability::TwoSided
                                       : Truncatability::OneSided;
}

long support_upper_bound(const DistributionSpec& spec) {
  validate(spec);
  switch (spec.family) {
    case Family::Binomial:
      return static_cast<long>(spec.params[0]);
    case Family::Bernoulli:
      return 1;
    case Family::Categorical:
      return static_cast<long>(spec.params.size()) - 1;
    default:
      return -1;
  }
}

TruncatedDistribution truncate(const DistributionSpec& spec, int n) {
  validate(spec);
  if (spec.family == Family::Multinomial) reject_multinomial("truncate");
  if (truncatability(spec) == Truncatability::NotTruncatable) {
    throw NotTruncatableError(
        "truncate: distribution lacks a finite mean and cannot be truncated");
  }
  if (n < 2) {
    throw std::invalid_argument("truncate: n must be >= 2");
  }

  TruncatedDistribution td;
  td.source = spec;
  td.trunc_lo = 0;
  td.trunc_hi = n - 1;
  td.pi.resize(static_cast<std::size_t>(n));
  td.c.resize(static_cast<std::size_t>(n));
  double head = 0.0;
  for (int k = 0; k < n - 1; ++k) {
    td.pi[static_cast<std::size_t>(k)] = pmf(spec, k);
    head += td.pi[static_cast<std::size_t>(k)];
    td.c[static_cast<std::size_t>(k)] = static_cast<double>(k);
  }
  td.pi[static_cast<std::size_t>(n - 1)] = std::max(0.0, 1.0 - head);
  td.c[static_cast<std::size_t>(n - 1)] = static_cast<double>(n - 1);
  return td;
}

TruncatedDistribution truncate_two_sided(const DistributionSpec& spec, long lo,
                                         long hi) {
  validate(spec);
  if (spec.family == Family::Multinomial) {
    reject_multinomial("truncate_two_sided");
  }
  if (truncatability(spec) != Truncatability::TwoSided) {
    throw NotTruncatableError(
        "truncate_two_sided: requires a finite variance");
  }
  if (lo < 0 || lo >= hi) {
    throw std::invalid_argument(
        "truncate_two_sided: need 0 <= lo < hi");
  }

  TruncatedDistribution td;
  td.source = spec;
  td.trunc_lo = lo;
  td.trunc_hi = hi;
  const std::size_t size = static_cast<std::size_t>(hi - lo + 1);
  td.pi.resize(size);
  td.c.resize(size);
  double head = cdf(spec, lo);
  td.pi[0] = head;
  td.c[0] = static_cast<double>(lo);
  for (long k = lo + 1; k < hi; ++k) {
    const std::size_t i = static_cast<std::size_t>(k - lo);
    td.pi[i] = pmf(spec, k);
    head += td.pi[i];
    td.c[i] = static_cast<double>(k);
  }
  td.pi[size - 1] = std::max(0.0, 1.0 - head);
  td.c[size - 1] = static_cast<double>(hi);
  return td;
}

int suggest_truncation(const DistributionSpec& spec, double epsilon,
                       int max_n) {
  validate(spec);
  if (spec.family == Family::Multinomial) {
    reject_multinomial("suggest_truncation");
  }
  if (!(epsilon > 0.0) || !(epsilon < 1.0)) {
    throw std::invalid_argument(
        "suggest_truncation: epsilon must lie in (0, 1)");
  }
  if (max_n < 2) {
    throw std::invalid_argument("suggest_truncation: max_n must be >= 2");
  }

  // Folded right-tail mass of truncate(spec, n) relative to the source is
  // P(X >= n); pick the first level where it drops below epsilon.
  double covered = pmf(spec, 0);
  for (int n = 2; n <= max_n; ++n) {
    covered += pmf(spec, n - 1);
    if (1.0 - covered < epsilon) return n;
  }
  throw TailTooHeavyError(
      "suggest_truncation: no level up to max_n reaches the tail tolerance");
}

double tv_distance(const DistributionSpec& spec,
                   const TruncatedDistribution& truncated) {
  validate(spec);
  if (spec.family == Family::Multinomial) reject_multinomial("tv_distance");

  const long lo = truncated.trunc_lo;
  const long hi = truncated.trunc_hi;
  const auto truncated_mass = [&](long k) -> double {
    if (k < lo || k > hi) return 0.0;
    return truncated.pi[static_cast<std::size_t>(k - lo)];
  };

  double covered = 0.0;
  double distance = 0.0;
  long k = 0;
  while ((covered < kTailExhaustion || k <= hi) && k < kEnumerationCap) {
    const double p = pmf(spec, k);
    covered += p;
    distance += std::fabs(p - truncated_mass(k));
    ++k;
  }
  // Whatever source mass remains lies strictly beyond the truncation.
  distance += std::max(0.0, 1.0 - covered);
  return 0.5 * distance;
}

long sample_scalar(const DistributionSpec& spec, NoiseSource& source) {
  validate(spec);
  switch (spec.family) {
    case Family::Bernoulli:
      return source.uniform() < spec.params[0] ? 1 : 0;
    case Family::Geometric: {
      // Closed-form inversion of P(X <= k) = 1 - (1-p)^{k+1}.
      const double u = source.uniform();
      const double k = std::floor(std::log1p(-u) / std::log1p(-spec.params[0]));
      return static_cast<long>(k);
    }
    case Family::Categorical: {
      const double u = source.uniform();
      const auto probs = categorical_probs(spec);
      double cum = 0.0;
      for (std::size_t j = 0; j + 1 < probs.size(); ++j) {
        cum += probs[j];
        if (u < cum) return static_cast<long>(j);
      }
      return static_cast<long>(probs.size()) - 1;
    }
    case Family::Poisson:
    case Family::Binomial:
    case Family::NegativeBinomial: {
      // Sequential inversion: walk the CDF until it passes the uniform.
      const double u = source.uniform();
      const long upper = support_upper_bound(spec);
      double cum = 0.0;
      long k = 0;
      while (k < kEnumerationCap) {
        cum += pmf(spec, k);
        if (u < cum) return k;
        if (upper >= 0 && k >= upper) return upper;
        ++k;
      }
      return k;
    }
    case Family::Multinomial:
      reject_multinomial("sample_scalar");
  }
  throw ParameterError("sample_scalar: unknown family");
}

std::vector<long> sample_counts(const DistributionSpec& spec,
                                NoiseSource& source) {
  validate(spec);
  if (spec.family != Family::Multinomial) {
    throw UnsupportedFamilyError("sample_counts: requires Multinomial");
  }
  const auto probs = multinomial_probs(spec);
  const long m = static_cast<long>(spec.params[0]);
  std::vector<long> counts(probs.size(), 0);
  DistributionSpec per_trial{Family::Categorical,
                             {probs.begin(), probs.end()}};
  for (long t = 0; t < m; ++t) {
    ++counts[static_cast<std::size_t>(sample_scalar(per_trial, source))];
  }
  return counts;
}

namespace {

void check_param_count(Family family, std::size_t given) {
  std::size_t expected = 0;
  switch (family) {
    case Family::Poisson:
    case Family::Geometric:
    case Family::Bernoulli:
      expected = 1;
      break;
    case Family::Binomial:
    case Family::NegativeBinomial:
      expected = 2;
      break;
    case Family::Categorical:
      if (given < 2) {
        throw std::invalid_argument(
            "log_pmf_on_tape: categorical needs >= 2 probability variables");
      }
      return;
    case Family::Multinomial:
      reject_multinomial("log_pmf_on_tape");
  }
  if (given != expected) {
    throw std::invalid_argument(
        "log_pmf_on_tape: wrong number of parameter variables for family");
  }
}

}  // namespace

Var log_pmf_on_tape(Family family, std::span<const Var> params, long k,
                    Tape& tape) {
  check_param_count(family, params.size());
  if (k < 0) {
    throw std::invalid_argument("log_pmf_on_tape: k must be >= 0");
  }
  const double kd = static_cast<double>(k);
  switch (family) {
    case Family::Poisson: {
      const Var lambda = params[0];
      return kd * tape.log(lambda) - lambda - std::lgamma(kd + 1.0);
    }
    case Family::Binomial: {
      // The trial count is structural, not a differentiable parameter.
      const double n = params[0].value();
      const Var p = params[1];
      if (kd > n) return tape.constant(-kInf);
      return tape.constant(log_choose(n, kd)) + kd * tape.log(p) +
             (n - kd) * tape.log(1.0 - p);
    }
    case Family::Geometric: {
      const Var p = params[0];
      return kd * tape.log(1.0 - p) + tape.log(p);
    }
    case Family::NegativeBinomial: {
      const Var r = params[0];
      const Var p = params[1];
      return tape.lgamma(kd + r) - tape.lgamma(r) - std::lgamma(kd + 1.0) +
             r * tape.log(p) + kd * tape.log(1.0 - p);
    }
    case Family::Bernoulli: {
      const Var p = params[0];
      if (k == 0) return tape.log(1.0 - p);
      if (k == 1) return tape.log(p);
      return tape.constant(-kInf);
    }
    case Family::Categorical: {
      if (static_cast<std::size_t>(k) >= params.size()) {
        return tape.constant(-kInf);
      }
      return tape.log(params[static_cast<std::size_t>(k)]);
    }
    case Family::Multinomial:
      reject_multinomial("log_pmf_on_tape");
  }
  throw std::invalid_argument("log_pmf_on_tape: unknown family");
}

Var truncate_on_tape(Family family, std::span<const Var> params, int n,
                     Tape& tape) {
  if (n < 2) {
    throw std::invalid_argument("truncate_on_tape: n must be >= 2");
  }
  std::vector<Var> entries;
  entries.reserve(static_cast<std::size_t>(n));
  Var head = tape.constant(0.0);
  for (int k = 0; k < n - 1; ++k) {
    const Var pk = tape.exp(log_pmf_on_tape(family, params, k, tape));
    entries.push_back(pk);
    head = head + pk;
  }
  entries.push_back(tape.clamp_min(1.0 - head, 1e-30));
  return tape.stack(entries);
}

}  // namespace gengs

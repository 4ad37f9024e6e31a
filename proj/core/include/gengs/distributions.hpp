// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gengs/random.hpp"
#include "gengs/tape.hpp"

namespace gengs {

enum class Family {
  Poisson,
  Binomial,
  Geometric,
  NegativeBinomial,
  Bernoulli,
  Categorical,
  Multinomial,
};

std::string family_name(Family family);

// A parametrized discrete distribution with support on the non-negative
// integers (Multinomial is vector-valued; see notes on each operation).
// Parameter layout by family:
//   Poisson            {lambda}
//   Binomial           {n_trials, p}
//   Geometric          {p}                    failures before first success
//   NegativeBinomial   {r, p}                 failures before r-th success
//   Bernoulli          {p}
//   Categorical        {p_0, ..., p_{d-1}}
//   Multinomial        {m_trials, p_0, ..., p_{d-1}}
struct DistributionSpec {
  Family family = Family::Poisson;
  std::vector<double> params;

  static DistributionSpec poisson(double lambda);
  static DistributionSpec binomial(long n_trials, double p);
  static DistributionSpec geometric(double p);
  static DistributionSpec negative_binomial(double r, double p);
  static DistributionSpec bernoulli(double p);
  static DistributionSpec categorical(std::vector<double> probs);
  static DistributionSpec multinomial(long m_trials, std::vector<double> probs);
};

// Throws ParameterError unless rate and count parameters are strictly
// positive, probabilities lie in (0, 1), counts are integral, and
// probability vectors sit on the simplex within 1e-9.
void validate(const DistributionSpec& spec);

enum class Truncatability { OneSided, TwoSided, NotTruncatable };

// A finite categorical stand-in for the source distribution: category k
// carries probability pi[k] of outcome value c[k]. End categories absorb
// the folded tail mass, so pi always sums to one.
struct TruncatedDistribution {
  std::vector<double> pi;
  std::vector<double> c;
  long trunc_lo = 0;
  long trunc_hi = 0;
  DistributionSpec source;
};

double pmf(const DistributionSpec& spec, long k);
double log_pmf(const DistributionSpec& spec, long k);  // -inf off support

// PMF evaluated straight from a parameter vector, skipping domain
// validation. Finite-difference callers perturb one parameter at a time,
// which leaves simplex constraints microscopically violated; this entry
// point keeps the arithmetic well-defined for them.
double pmf_unchecked(Family family, std::span<const double> params, long k);

// Multinomial mass of a full count vector; probs need not be validated,
// for the same finite-difference reason.
double multinomial_pmf(long m, std::span<const double> probs,
                       std::span<const long> counts);
double cdf(const DistributionSpec& spec, long k);
double mean(const DistributionSpec& spec);
// Returns +infinity when the variance diverges.
double variance(const DistributionSpec& spec);

// OneSided needs a finite mean; TwoSided additionally a finite variance.
Truncatability truncatability(const DistributionSpec& spec);

// Folds all mass at and beyond category n-1 into the last category:
// pi[k] = pmf(k) for k < n-1, pi[n-1] = 1 - sum(rest), c = (0, ..., n-1).
TruncatedDistribution truncate(const DistributionSpec& spec, int n);

// Two-sided variant on outcomes (lo, ..., hi); the first category absorbs
// P(X <= lo) and the last P(X >= hi).
TruncatedDistribution truncate_two_sided(const DistributionSpec& spec, long lo,
                                         long hi);

// Smallest n <= max_n whose folded right tail P(X >= n) drops below
// epsilon; throws TailTooHeavyError when no level within budget does.
int suggest_truncation(const DistributionSpec& spec, double epsilon,
                       int max_n);

// Total variation distance between the source distribution and its
// truncation, summed over the union support until the source tail is
// numerically exhausted (cumulative mass > 1 - 1e-12).
double tv_distance(const DistributionSpec& spec,
                   const TruncatedDistribution& truncated);

// Largest support point for finite-support families, -1 when unbounded.
long support_upper_bound(const DistributionSpec& spec);

// Exact draws via per-family inversion. sample_scalar covers every scalar
// family; sample_counts covers Multinomial (one count per category).
long sample_scalar(const DistributionSpec& spec, NoiseSource& source);
std::vector<long> sample_counts(const DistributionSpec& spec,
                                NoiseSource& source);

// log pmf(k) as a tape expression of the distribution parameters, so the
// gradient with respect to them flows through backward(). params follows
// the same layout as DistributionSpec::params.
Var log_pmf_on_tape(Family family, std::span<const Var> params, long k,
                    Tape& tape);

// One-sided truncation built on tape: entries k < n-1 are exp(log pmf),
// the last is the complement clamped to at least 1e-30 so it stays
// loggable when the true tail underflows.
Var truncate_on_tape(Family family, std::span<const Var> params, int n,
                     Tape& tape);

}  // namespace gengs

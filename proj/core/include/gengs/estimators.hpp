// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gengs/distributions.hpp"
#include "gengs/random.hpp"
#include "gengs/tape.hpp"

namespace gengs {

// A deterministic loss that decomposes over independent latent dimensions:
// value(z) = sum_i block_value(i, z_block_i). Blocks are scalar outcomes
// for scalar families and count vectors for Multinomial. The exact
// enumeration oracle relies on this additivity.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual int latent_count() const = 0;
  virtual int block_size() const = 0;
  virtual double block_value(int i, std::span<const double> z_block) const = 0;
  virtual Var block_value_on_tape(int i, Var z_block, Tape& tape) const = 0;

  int dim() const { return latent_count() * block_size(); }
  double value(std::span<const double> z) const;
};

// sum_i ||z_i - t_i||^2 against fixed targets, the synthetic benchmark
// loss. Targets are stored flat, block_size entries per latent dimension.
class SquaredErrorObjective final : public Objective {
 public:
  explicit SquaredErrorObjective(std::vector<double> targets,
                                 int block_size = 1);

  int latent_count() const override { return latent_count_; }
  int block_size() const override { return block_size_; }
  double block_value(int i, std::span<const double> z_block) const override;
  Var block_value_on_tape(int i, Var z_block, Tape& tape) const override;
  const std::vector<double>& targets() const { return targets_; }

 private:
  std::vector<double> targets_;
  int block_size_ = 1;
  int latent_count_ = 0;
};

// One gradient query. grad is taken with respect to the natural learnable
// parameters of the family (see ParamSpace); optimizers working in an
// unconstrained preimage apply the chain rule themselves, which keeps
// bias and variance measurements of every estimator in one shared space.
struct GradEstimate {
  std::vector<double> grad;
  double loss_value = 0.0;
  long sample_count = 0;
  std::uint64_t seed = 0;
};

// Which parameters of a family are learnable and how they map to an
// unconstrained optimization preimage:
//   rates and counts        softplus      (lambda, r)
//   scalar probabilities    logistic      (p)
//   probability vectors     softmax       (categorical / multinomial p)
// Structural integers (binomial n, multinomial m) stay fixed.
class ParamSpace {
 public:
  explicit ParamSpace(const DistributionSpec& spec);

  int count() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  std::vector<double> natural(const DistributionSpec& spec) const;
  DistributionSpec with_natural(const DistributionSpec& base,
                                std::span<const double> natural) const;
  std::vector<double> to_preimage(std::span<const double> natural) const;
  std::vector<double> from_preimage(std::span<const double> preimage) const;
  // Jacobian-transpose product mapping a natural-space gradient into the
  // preimage space at the given preimage point.
  std::vector<double> preimage_grad(std::span<const double> preimage,
                                    std::span<const double> natural_grad) const;

 private:
  enum class Map { Softplus, Logistic, Softmax };

  Family family_;
  Map map_ = Map::Softplus;
  std::vector<std::string> names_;
};

// All count vectors of length d summing to m, in lexicographic order.
std::vector<std::vector<long>> enumerate_count_vectors(long m, int d);

// Exactly enumerated E[loss] over the truncated support (or over all count
// vectors for Multinomial, where n is ignored).
double enumerated_objective(const Objective& objective,
                            const DistributionSpec& spec, int n);

// Exact gradient of the enumerated expectation. Poisson uses the identity
// d pmf(k)/d lambda = pmf(k-1) - pmf(k) with the last category as the
// negated sum of the others; every other family differentiates the
// truncated probabilities by central finite differences (step 1e-6).
GradEstimate exact_gradient(const Objective& objective,
                            const DistributionSpec& spec, int n);

// Single-sample pathwise estimator: truncate on tape, relax with shared
// Gumbel noise, push through the objective, backward to the parameters.
GradEstimate gengs_explicit(const Objective& objective,
                            const DistributionSpec& spec, int n, double tau,
                            NoiseSource& source);

// Pathwise estimator whose forward values are discretized to the argmax
// outcome; adjoints are routed through the relaxed path unchanged.
GradEstimate st_gengs(const Objective& objective, const DistributionSpec& spec,
                      int n, double tau, NoiseSource& source);

// Rao-Blackwellized pathwise estimator: the top category's term is handled
// exactly on tape and a relaxed sample restricted to the renormalized
// remainder estimates the rest. When the remainder mass falls below 1e-12
// the sampled term is dropped entirely and only the exact term is kept.
GradEstimate gengs_rb(const Objective& objective, const DistributionSpec& spec,
                      int n, double tau, NoiseSource& source);

// Parameter-free variant: learns categorical logits over a fixed truncated
// prior's support. loss = objective(relaxed samples of softmax(logits)) +
// kl_weight * KL(softmax(logits) || prior.pi); grad is w.r.t. the logits.
GradEstimate gengs_implicit(const Objective& objective,
                            std::span<const double> logits,
                            const TruncatedDistribution& prior, double tau,
                            double kl_weight, NoiseSource& source);

// Exponential running mean of past objective values, decay 0.9. Reads as
// 0 until the first update.
class RunningMeanBaseline {
 public:
  double value() const { return initialized_ ? mean_ : 0.0; }
  void update(double f);

 private:
  double mean_ = 0.0;
  bool initialized_ = false;
};

// d log pmf(sample) / d(natural learnable params), in closed form. The
// sample is {k} for scalar families and the full count vector for
// Multinomial.
std::vector<double> score_function(const DistributionSpec& spec,
                                   std::span<const long> sample);

// Score-function estimator on true discrete samples:
// (f(z) - b) * d log p(z | params), with b the running-mean baseline value
// (0 when absent). The baseline is updated with f after use.
GradEstimate reinforce(const Objective& objective, const DistributionSpec& spec,
                       NoiseSource& source,
                       RunningMeanBaseline* baseline = nullptr);

// Mean, elementwise unbiased sample variance, and (when an exact reference
// is supplied) bias of repeated estimator invocations.
struct MomentStats {
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> bias;
  double loss_mean = 0.0;
};

MomentStats estimate_moments(const std::function<GradEstimate(int)>& run,
                             int repeats, const GradEstimate* exact = nullptr);

}  // namespace gengs

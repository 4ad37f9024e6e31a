// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <vector>

#include "doctest.h"
#include "gengs/distributions.hpp"
#include "gengs/errors.hpp"
#include "gengs/estimators.hpp"
#include "gengs/random.hpp"
#include "gengs/relaxation.hpp"

using namespace gengs;

namespace {

// Objective that ignores its input; every estimator must report a zero
// gradient for it because probabilities always sum to one.
class ConstObjective final : public Objective {
 public:
  ConstObjective(int latents, int block, double value)
      : latents_(latents), block_(block), value_(value) {}
  int latent_count() const override { return latents_; }
  int block_size() const override { return block_; }
  double block_value(int, std::span<const double>) const override {
    return value_;
  }
  Var block_value_on_tape(int, Var z_block, Tape& tape) const override {
    // Multiply by zero instead of detaching so the tape stays connected.
    if (z_block.size() == 1) return tape.constant(value_) + 0.0 * z_block;
    return tape.constant(value_) + 0.0 * tape.sum(z_block);
  }

 private:
  int latents_ = 1;
  int block_ = 1;
  double value_ = 0.0;
};

double fd_pair(const std::function<double(double)>& f, double x,
               double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("squared error objective decomposes over latents") {
  const SquaredErrorObjective obj({1.0, 2.0, 3.0});
  CHECK(obj.latent_count() == 3);
  CHECK(obj.block_size() == 1);
  CHECK(obj.dim() == 3);
  const std::vector<double> z = {1.5, 2.0, 0.0};
  CHECK(obj.value(z) == doctest::Approx(0.25 + 0.0 + 9.0).epsilon(1e-12));
  const std::vector<double> z1 = {4.0};
  CHECK(obj.block_value(2, z1) == doctest::Approx(1.0).epsilon(1e-12));

  const SquaredErrorObjective vec({1.0, 0.0, 2.0, 1.0}, 2);
  CHECK(vec.latent_count() == 2);
  CHECK(vec.block_size() == 2);
  const std::vector<double> zv = {0.0, 0.0, 2.0, 2.0};
  CHECK(vec.value(zv) == doctest::Approx(1.0 + 0.0 + 0.0 + 1.0).epsilon(1e-12));
}

TEST_CASE("squared error tape block matches values and derivatives") {
  const SquaredErrorObjective obj({3.0});
  Tape tape;
  Var z = tape.input(5.0);
  Var v = obj.block_value_on_tape(0, z, tape);
  tape.backward(v);
  CHECK(v.value() == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(z.adjoint() == doctest::Approx(2.0 * (5.0 - 3.0)).epsilon(1e-12));
}

TEST_CASE("count vector enumeration is complete and lexicographic") {
  const std::vector<std::vector<long>> vecs = enumerate_count_vectors(2, 3);
  REQUIRE(vecs.size() == 6);
  CHECK(vecs[0] == std::vector<long>{0, 0, 2});
  CHECK(vecs[1] == std::vector<long>{0, 1, 1});
  CHECK(vecs[2] == std::vector<long>{0, 2, 0});
  CHECK(vecs[3] == std::vector<long>{1, 0, 1});
  CHECK(vecs[4] == std::vector<long>{1, 1, 0});
  CHECK(vecs[5] == std::vector<long>{2, 0, 0});
  for (const std::vector<long>& v : vecs) {
    CHECK(v[0] + v[1] + v[2] == 2);
  }
  CHECK(enumerate_count_vectors(0, 3).size() == 1);
}

TEST_CASE("enumerated objective equals the brute-force expectation") {
  const DistributionSpec spec = DistributionSpec::poisson(2.0);
  const int n = 10;
  const SquaredErrorObjective obj({3.0});
  const TruncatedDistribution td = truncate(spec, n);
  double manual = 0.0;
  for (int k = 0; k < n; ++k) {
    manual += td.pi[static_cast<std::size_t>(k)] *
              (td.c[static_cast<std::size_t>(k)] - 3.0) *
              (td.c[static_cast<std::size_t>(k)] - 3.0);
  }
  CHECK(enumerated_objective(obj, spec, n) ==
        doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("enumerated objective covers every multinomial count vector") {
  const DistributionSpec spec =
      DistributionSpec::multinomial(2, {0.5, 0.3, 0.2});
  const SquaredErrorObjective obj({1.0, 1.0, 0.0}, 3);
  double manual = 0.0;
  for (const std::vector<long>& counts : enumerate_count_vectors(2, 3)) {
    std::vector<double> z(counts.begin(), counts.end());
    manual += multinomial_pmf(2, std::vector<double>{0.5, 0.3, 0.2}, counts) *
              obj.value(z);
  }
  CHECK(enumerated_objective(obj, spec, 0) ==
        doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("enumerated objective sums independent latents") {
  const DistributionSpec spec = DistributionSpec::geometric(0.5);
  const SquaredErrorObjective obj({1.0, 4.0});
  const SquaredErrorObjective first({1.0});
  const SquaredErrorObjective second({4.0});
  CHECK(enumerated_objective(obj, spec, 12) ==
        doctest::Approx(enumerated_objective(first, spec, 12) +
                        enumerated_objective(second, spec, 12))
            .epsilon(1e-12));
}

TEST_CASE("exact gradient matches finite differences of the enumeration") {
  const SquaredErrorObjective obj({4.0});
  const int n = 16;

  SUBCASE("poisson uses the shift identity") {
    const GradEstimate g =
        exact_gradient(obj, DistributionSpec::poisson(3.0), n);
    REQUIRE(g.grad.size() == 1);
    const double ref = fd_pair(
        [&](double l) {
          return enumerated_objective(obj, DistributionSpec::poisson(l), n);
        },
        3.0);
    CHECK(g.grad[0] == doctest::Approx(ref).epsilon(1e-6));
    CHECK(g.loss_value ==
          doctest::Approx(
              enumerated_objective(obj, DistributionSpec::poisson(3.0), n))
              .epsilon(1e-12));
  }

  SUBCASE("binomial differentiates p at fixed trial count") {
    const GradEstimate g =
        exact_gradient(obj, DistributionSpec::binomial(9, 0.35), 10);
    REQUIRE(g.grad.size() == 1);
    const double ref = fd_pair(
        [&](double p) {
          return enumerated_objective(obj, DistributionSpec::binomial(9, p),
                                      10);
        },
        0.35);
    CHECK(g.grad[0] == doctest::Approx(ref).epsilon(1e-6));
  }

  SUBCASE("geometric differentiates p") {
    const GradEstimate g =
        exact_gradient(obj, DistributionSpec::geometric(0.45), 24);
    const double ref = fd_pair(
        [&](double p) {
          return enumerated_objective(obj, DistributionSpec::geometric(p), 24);
        },
        0.45);
    CHECK(g.grad[0] == doctest::Approx(ref).epsilon(1e-6));
  }

  SUBCASE("negative binomial differentiates r and p") {
    const DistributionSpec spec = DistributionSpec::negative_binomial(2.5, 0.5);
    const GradEstimate g = exact_gradient(obj, spec, 30);
    REQUIRE(g.grad.size() == 2);
    const double ref_r = fd_pair(
        [&](double r) {
          return enumerated_objective(
              obj, DistributionSpec::negative_binomial(r, 0.5), 30);
        },
        2.5);
    const double ref_p = fd_pair(
        [&](double p) {
          return enumerated_objective(
              obj, DistributionSpec::negative_binomial(2.5, p), 30);
        },
        0.5);
    CHECK(g.grad[0] == doctest::Approx(ref_r).epsilon(1e-6));
    CHECK(g.grad[1] == doctest::Approx(ref_p).epsilon(1e-6));
  }

  SUBCASE("bernoulli differentiates p") {
    const SquaredErrorObjective small({0.8});
    const GradEstimate g =
        exact_gradient(small, DistributionSpec::bernoulli(0.3), 2);
    // E = 0.7 * 0.64 + 0.3 * 0.04; dE/dp = 0.04 - 0.64.
    CHECK(g.grad[0] == doctest::Approx(-0.6).epsilon(1e-9));
  }

  SUBCASE("categorical gradients carry simplex-direction information") {
    const DistributionSpec spec =
        DistributionSpec::categorical({0.3, 0.25, 0.2, 0.25});
    const GradEstimate g = exact_gradient(obj, spec, 4);
    REQUIRE(g.grad.size() == 4);
    const double h = 1e-6;
    // Perturb along p_i - p_j, which stays on the simplex.
    for (int i = 0; i < 3; ++i) {
      for (int j = i + 1; j < 3; ++j) {
        std::vector<double> up = spec.params, dn = spec.params;
        up[static_cast<std::size_t>(i)] += h;
        up[static_cast<std::size_t>(j)] -= h;
        dn[static_cast<std::size_t>(i)] -= h;
        dn[static_cast<std::size_t>(j)] += h;
        const double ref =
            (enumerated_objective(obj, DistributionSpec::categorical(up), 4) -
             enumerated_objective(obj, DistributionSpec::categorical(dn), 4)) /
            (2.0 * h);
        CAPTURE(i);
        CAPTURE(j);
        CHECK(g.grad[static_cast<std::size_t>(i)] -
                  g.grad[static_cast<std::size_t>(j)] ==
              doctest::Approx(ref).epsilon(1e-6));
      }
    }
  }

  SUBCASE("multinomial gradients carry simplex-direction information") {
    const DistributionSpec spec =
        DistributionSpec::multinomial(2, {0.5, 0.3, 0.2});
    const SquaredErrorObjective mobj({1.0, 1.0, 0.0}, 3);
    const GradEstimate g = exact_gradient(mobj, spec, 0);
    REQUIRE(g.grad.size() == 3);
    const double h = 1e-6;
    auto at = [&](const std::vector<double>& probs) {
      return enumerated_objective(mobj, DistributionSpec::multinomial(2, probs),
                                  0);
    };
    for (int i = 0; i < 2; ++i) {
      for (int j = i + 1; j < 3; ++j) {
        std::vector<double> up = {0.5, 0.3, 0.2}, dn = up;
        up[static_cast<std::size_t>(i)] += h;
        up[static_cast<std::size_t>(j)] -= h;
        dn[static_cast<std::size_t>(i)] -= h;
        dn[static_cast<std::size_t>(j)] += h;
        const double ref = (at(up) - at(dn)) / (2.0 * h);
        CHECK(g.grad[static_cast<std::size_t>(i)] -
                  g.grad[static_cast<std::size_t>(j)] ==
              doctest::Approx(ref).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("constant objectives have exactly zero exact gradient") {
  const ConstObjective obj(2, 1, 5.0);
  const DistributionSpec specs[] = {
      DistributionSpec::poisson(2.0),
      DistributionSpec::binomial(5, 0.4),
      DistributionSpec::geometric(0.5),
      DistributionSpec::negative_binomial(2.0, 0.6),
  };
  for (const DistributionSpec& spec : specs) {
    CAPTURE(family_name(spec.family));
    const GradEstimate g = exact_gradient(obj, spec, 12);
    CHECK(g.loss_value == doctest::Approx(10.0).epsilon(1e-9));
    for (double x : g.grad) CHECK(x == doctest::Approx(0.0).epsilon(1e-7));
  }
}

TEST_CASE("pathwise gradient matches finite differences with frozen noise") {
  const std::uint64_t seed = 1234;
  const double tau = 0.7;

  SUBCASE("poisson") {
    const SquaredErrorObjective obj({4.0, 1.5});
    auto loss_at = [&](double lambda) {
      NoiseSource source(seed);
      return gengs_explicit(obj, DistributionSpec::poisson(lambda), 10, tau,
                            source)
          .loss_value;
    };
    NoiseSource source(seed);
    const GradEstimate g =
        gengs_explicit(obj, DistributionSpec::poisson(2.0), 10, tau, source);
    REQUIRE(g.grad.size() == 1);
    CHECK(g.sample_count == 2);
    CHECK(g.grad[0] ==
          doctest::Approx(fd_pair(loss_at, 2.0)).epsilon(1e-4));
  }

  SUBCASE("negative binomial") {
    const SquaredErrorObjective obj({2.0});
    auto loss_at = [&](double r, double p) {
      NoiseSource source(seed);
      return gengs_explicit(obj, DistributionSpec::negative_binomial(r, p), 12,
                            tau, source)
          .loss_value;
    };
    NoiseSource source(seed);
    const GradEstimate g = gengs_explicit(
        obj, DistributionSpec::negative_binomial(2.0, 0.5), 12, tau, source);
    REQUIRE(g.grad.size() == 2);
    CHECK(g.grad[0] == doctest::Approx(fd_pair(
                           [&](double r) { return loss_at(r, 0.5); }, 2.0))
                           .epsilon(1e-4));
    CHECK(g.grad[1] == doctest::Approx(fd_pair(
                           [&](double p) { return loss_at(2.0, p); }, 0.5))
                           .epsilon(1e-4));
  }

  SUBCASE("bernoulli") {
    const SquaredErrorObjective obj({0.8});
    auto loss_at = [&](double p) {
      NoiseSource source(seed);
      return gengs_explicit(obj, DistributionSpec::bernoulli(p), 2, tau, source)
          .loss_value;
    };
    NoiseSource source(seed);
    const GradEstimate g =
        gengs_explicit(obj, DistributionSpec::bernoulli(0.4), 2, tau, source);
    CHECK(g.grad[0] == doctest::Approx(fd_pair(loss_at, 0.4)).epsilon(1e-4));
  }

  SUBCASE("categorical along simplex directions") {
    const SquaredErrorObjective obj({2.0});
    const std::vector<double> base = {0.3, 0.25, 0.2, 0.25};
    auto loss_at = [&](const std::vector<double>& probs) {
      NoiseSource source(seed);
      return gengs_explicit(obj, DistributionSpec::categorical(probs), 4, tau,
                            source)
          .loss_value;
    };
    NoiseSource source(seed);
    const GradEstimate g = gengs_explicit(
        obj, DistributionSpec::categorical(base), 4, tau, source);
    REQUIRE(g.grad.size() == 4);
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
      std::vector<double> up = base, dn = base;
      up[static_cast<std::size_t>(i)] += h;
      up[3] -= h;
      dn[static_cast<std::size_t>(i)] -= h;
      dn[3] += h;
      const double ref = (loss_at(up) - loss_at(dn)) / (2.0 * h);
      CHECK(g.grad[static_cast<std::size_t>(i)] - g.grad[3] ==
            doctest::Approx(ref).epsilon(1e-4));
    }
  }

  SUBCASE("multinomial along simplex directions") {
    const SquaredErrorObjective obj({1.0, 1.0, 1.0}, 3);
    const std::vector<double> base = {0.5, 0.3, 0.2};
    auto loss_at = [&](const std::vector<double>& probs) {
      NoiseSource source(seed);
      return gengs_explicit(obj, DistributionSpec::multinomial(3, probs), 0,
                            tau, source)
          .loss_value;
    };
    NoiseSource source(seed);
    const GradEstimate g = gengs_explicit(
        obj, DistributionSpec::multinomial(3, base), 0, tau, source);
    REQUIRE(g.grad.size() == 3);
    const double h = 1e-6;
    for (int i = 0; i < 2; ++i) {
      std::vector<double> up = base, dn = base;
      up[static_cast<std::size_t>(i)] += h;
      up[2] -= h;
      dn[static_cast<std::size_t>(i)] -= h;
      dn[2] += h;
      const double ref = (loss_at(up) - loss_at(dn)) / (2.0 * h);
      CHECK(g.grad[static_cast<std::size_t>(i)] - g.grad[2] ==
            doctest::Approx(ref).epsilon(1e-4));
    }
  }
}

TEST_CASE("pathwise estimates are deterministic in the seed") {
  const SquaredErrorObjective obj({4.0});
  NoiseSource a(9);
  NoiseSource b(9);
  const GradEstimate ga =
      gengs_explicit(obj, DistributionSpec::poisson(2.0), 10, 0.5, a);
  const GradEstimate gb =
      gengs_explicit(obj, DistributionSpec::poisson(2.0), 10, 0.5, b);
  CHECK(ga.grad == gb.grad);
  CHECK(ga.loss_value == gb.loss_value);
}

TEST_CASE("straight-through routes relaxed adjoints through the snapped draw") {
  // The estimator reports the objective at the hard draws while its gradient
  // differentiates the relaxed path, holding the snap offset fixed. Both
  // halves are cross-checked independently: the forward value against a
  // mirrored hard sampler, the gradient against central differences of the
  // offset surrogate lambda' -> f(relaxed(lambda') + hard - relaxed(lambda)).
  const SquaredErrorObjective obj({4.0, 1.0, 2.5});
  const double lambda = 2.0;
  const int n = 10;
  const double tau = 0.5;
  NoiseSource a(77);
  const GradEstimate snapped =
      st_gengs(obj, DistributionSpec::poisson(lambda), n, tau, a);
  REQUIRE(snapped.grad.size() == 1);

  // Mirror the noise stream to recover the per-latent noise vectors.
  NoiseSource b(77);
  std::vector<GumbelNoise> noises;
  for (int i = 0; i < 3; ++i) noises.push_back(sample_gumbel_vector(b, n));

  auto relaxed_values = [&](double lam) {
    const TruncatedDistribution td =
        truncate(DistributionSpec::poisson(lam), n);
    std::vector<double> vals;
    for (const GumbelNoise& noise : noises) {
      double mx = -std::numeric_limits<double>::infinity();
      std::vector<double> logits(td.pi.size());
      for (std::size_t k = 0; k < td.pi.size(); ++k) {
        logits[k] = (std::log(td.pi[k]) + noise.g[k]) / tau;
        mx = std::max(mx, logits[k]);
      }
      double zsum = 0.0;
      double dot = 0.0;
      for (std::size_t k = 0; k < logits.size(); ++k) {
        const double e = std::exp(logits[k] - mx);
        zsum += e;
        dot += e * td.c[k];
      }
      vals.push_back(dot / zsum);
    }
    return vals;
  };

  const TruncatedDistribution td = truncate(DistributionSpec::poisson(lambda), n);
  const std::vector<double> base = relaxed_values(lambda);
  std::vector<double> hard;
  std::vector<double> offset;
  for (int i = 0; i < 3; ++i) {
    hard.push_back(
        td.c[static_cast<std::size_t>(gumbel_max(td.pi, noises[i]).index)]);
    offset.push_back(hard.back() - base[static_cast<std::size_t>(i)]);
  }
  CHECK(snapped.loss_value == doctest::Approx(obj.value(hard)).epsilon(1e-12));

  auto surrogate = [&](double lam) {
    const std::vector<double> v = relaxed_values(lam);
    std::vector<double> z;
    for (int i = 0; i < 3; ++i) {
      z.push_back(v[static_cast<std::size_t>(i)] +
                  offset[static_cast<std::size_t>(i)]);
    }
    return obj.value(z);
  };
  const double h = 1e-5;
  const double fd = (surrogate(lambda + h) - surrogate(lambda - h)) / (2.0 * h);
  CHECK(snapped.grad[0] == doctest::Approx(fd).epsilon(1e-5));
}

namespace {

// Share of noise draws on which the snapped and relaxed gradients agree to
// relative error 0.01 under common random numbers.
double st_agreement_rate(const Objective& obj, const DistributionSpec& spec,
                         int n, double tau, int trials, int seed0) {
  int agree = 0;
  for (int t = 0; t < trials; ++t) {
    NoiseSource a(seed0 + t);
    NoiseSource b(seed0 + t);
    const GradEstimate relaxed = gengs_explicit(obj, spec, n, tau, a);
    const GradEstimate snapped = st_gengs(obj, spec, n, tau, b);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < relaxed.grad.size(); ++i) {
      num += (snapped.grad[i] - relaxed.grad[i]) *
             (snapped.grad[i] - relaxed.grad[i]);
      den += relaxed.grad[i] * relaxed.grad[i];
    }
    if (std::sqrt(num) / std::max(1.0, std::sqrt(den)) < 0.01) ++agree;
  }
  return static_cast<double>(agree) / trials;
}

}  // namespace

TEST_CASE("straight-through converges to the relaxed gradient at low tau") {
  // The two estimators differ only in where the objective slope is taken:
  // the hard draw versus the relaxed sample. As tau shrinks the relaxed
  // sample concentrates on the hard draw, so the agreement rate climbs
  // toward one.
  const SquaredErrorObjective obj({4.0, 1.0, 2.5});
  const DistributionSpec spec = DistributionSpec::poisson(2.0);
  const double warm = st_agreement_rate(obj, spec, 10, 0.1, 300, 500);
  const double cold = st_agreement_rate(obj, spec, 10, 0.001, 300, 500);
  CHECK(cold >= warm);
  CHECK(cold >= 0.95);
}

TEST_CASE("straight-through multinomial tracks the relaxed gradient at low tau") {
  const SquaredErrorObjective obj({1.0, 1.0, 1.0}, 3);
  const DistributionSpec spec = DistributionSpec::multinomial(3, {0.5, 0.3, 0.2});
  const double warm = st_agreement_rate(obj, spec, 0, 0.1, 300, 900);
  const double cold = st_agreement_rate(obj, spec, 0, 0.001, 300, 900);
  CHECK(cold >= warm);
  CHECK(cold >= 0.95);

  // Snapped forward values stay finite at the hard count vectors.
  NoiseSource b(900);
  const GradEstimate snapped = st_gengs(obj, spec, 0, 0.001, b);
  CHECK(std::isfinite(snapped.loss_value));
}

TEST_CASE("rao-blackwellized estimator handles its special cases") {
  SUBCASE("constant objective gives an exactly zero gradient") {
    const ConstObjective obj(1, 1, 3.0);
    NoiseSource source(13);
    const GradEstimate g =
        gengs_rb(obj, DistributionSpec::poisson(2.3), 10, 0.5, source);
    CHECK(g.loss_value == doctest::Approx(3.0).epsilon(1e-9));
    for (double x : g.grad) CHECK(x == doctest::Approx(0.0).epsilon(1e-9));
  }

  SUBCASE("gradient matches finite differences with frozen noise") {
    const SquaredErrorObjective obj({4.0});
    auto loss_at = [&](double lambda) {
      NoiseSource source(29);
      return gengs_rb(obj, DistributionSpec::poisson(lambda), 10, 0.7, source)
          .loss_value;
    };
    NoiseSource source(29);
    const GradEstimate g =
        gengs_rb(obj, DistributionSpec::poisson(2.3), 10, 0.7, source);
    CHECK(g.grad[0] == doctest::Approx(fd_pair(loss_at, 2.3)).epsilon(1e-4));
  }

  SUBCASE("degenerate remainder falls back to the exact term") {
    const SquaredErrorObjective obj({0.0});
    NoiseSource source(5);
    const GradEstimate g = gengs_rb(
        obj, DistributionSpec::bernoulli(1.0 - 1e-13), 2, 0.5, source);
    CHECK(g.sample_count == 0);
    // Almost all mass sits on outcome 1, handled exactly.
    CHECK(g.loss_value == doctest::Approx(1.0).epsilon(1e-9));
    for (double x : g.grad) CHECK(std::isfinite(x));
  }

  SUBCASE("vector-valued families are rejected") {
    const SquaredErrorObjective obj({1.0, 1.0}, 2);
    NoiseSource source(3);
    CHECK_THROWS_AS(
        gengs_rb(obj, DistributionSpec::multinomial(2, {0.5, 0.5}), 0, 0.5,
                 source),
        UnsupportedFamilyError);
  }
}

TEST_CASE("implicit estimator differentiates its logits") {
  const TruncatedDistribution prior = truncate(DistributionSpec::poisson(2.0), 6);
  const std::vector<double> logits = {0.1, -0.2, 0.4, 0.0, -0.5, 0.3};

  SUBCASE("pure divergence path has a deterministic gradient") {
    const SquaredErrorObjective empty(std::vector<double>{});
    auto loss_at = [&](const std::vector<double>& l) {
      NoiseSource source(1);
      return gengs_implicit(empty, l, prior, 0.5, 0.2, source).loss_value;
    };
    NoiseSource source(1);
    const GradEstimate g =
        gengs_implicit(empty, logits, prior, 0.5, 0.2, source);
    REQUIRE(g.grad.size() == 6);
    const double h = 1e-6;
    for (std::size_t j = 0; j < 6; ++j) {
      std::vector<double> up = logits, dn = logits;
      up[j] += h;
      dn[j] -= h;
      const double ref = (loss_at(up) - loss_at(dn)) / (2.0 * h);
      CHECK(g.grad[j] == doctest::Approx(ref).epsilon(1e-5));
    }
  }

  SUBCASE("relaxed objective path matches finite differences") {
    const SquaredErrorObjective obj({3.0});
    auto loss_at = [&](const std::vector<double>& l) {
      NoiseSource source(8);
      return gengs_implicit(obj, l, prior, 0.6, 0.1, source).loss_value;
    };
    NoiseSource source(8);
    const GradEstimate g = gengs_implicit(obj, logits, prior, 0.6, 0.1, source);
    const double h = 1e-6;
    for (std::size_t j = 0; j < 6; ++j) {
      std::vector<double> up = logits, dn = logits;
      up[j] += h;
      dn[j] -= h;
      const double ref = (loss_at(up) - loss_at(dn)) / (2.0 * h);
      CHECK(g.grad[j] == doctest::Approx(ref).epsilon(1e-4));
    }
  }

  SUBCASE("shape and weight validation") {
    const SquaredErrorObjective obj({3.0});
    NoiseSource source(2);
    const std::vector<double> short_logits = {0.0, 0.0};
    CHECK_THROWS(gengs_implicit(obj, short_logits, prior, 0.5, 0.1, source));
    CHECK_THROWS(gengs_implicit(obj, logits, prior, 0.5, -0.1, source));
    const SquaredErrorObjective vec({1.0, 1.0}, 2);
    CHECK_THROWS(gengs_implicit(vec, logits, prior, 0.5, 0.1, source));
  }
}

TEST_CASE("score function matches log pmf derivatives") {
  SUBCASE("poisson") {
    const std::vector<long> k = {5};
    const std::vector<double> s =
        score_function(DistributionSpec::poisson(2.0), k);
    REQUIRE(s.size() == 1);
    CHECK(s[0] == doctest::Approx(5.0 / 2.0 - 1.0).epsilon(1e-12));
    const std::vector<long> at_mean = {3};
    CHECK(score_function(DistributionSpec::poisson(3.0), at_mean)[0] == 0.0);
  }

  SUBCASE("closed forms match finite differences of log pmf") {
    struct Case {
      DistributionSpec spec;
      long k;
    };
    const Case cases[] = {
        {DistributionSpec::poisson(2.7), 4},
        {DistributionSpec::binomial(8, 0.35), 3},
        {DistributionSpec::geometric(0.4), 2},
        {DistributionSpec::negative_binomial(2.5, 0.45), 3},
        {DistributionSpec::bernoulli(0.3), 1},
        {DistributionSpec::bernoulli(0.3), 0},
    };
    for (const Case& c : cases) {
      CAPTURE(family_name(c.spec.family));
      CAPTURE(c.k);
      const std::vector<long> sample = {c.k};
      const std::vector<double> s = score_function(c.spec, sample);
      const ParamSpace space(c.spec);
      REQUIRE(static_cast<int>(s.size()) == space.count());
      const std::vector<double> nat = space.natural(c.spec);
      for (std::size_t j = 0; j < s.size(); ++j) {
        auto lp = [&](double x) {
          std::vector<double> n2 = nat;
          n2[j] = x;
          return log_pmf(space.with_natural(c.spec, n2), c.k);
        };
        CHECK(s[j] == doctest::Approx(fd_pair(lp, nat[j], 1e-7)).epsilon(1e-4));
      }
    }
  }

  SUBCASE("categorical puts the inverse probability on the drawn bin") {
    const std::vector<long> k = {2};
    const std::vector<double> s =
        score_function(DistributionSpec::categorical({0.2, 0.3, 0.5}), k);
    REQUIRE(s.size() == 3);
    CHECK(s[0] == 0.0);
    CHECK(s[1] == 0.0);
    CHECK(s[2] == doctest::Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("multinomial scores each bin by count over probability") {
    const std::vector<long> counts = {2, 0, 1};
    const std::vector<double> s = score_function(
        DistributionSpec::multinomial(3, {0.5, 0.3, 0.2}), counts);
    REQUIRE(s.size() == 3);
    CHECK(s[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(s[1] == 0.0);
    CHECK(s[2] == doctest::Approx(5.0).epsilon(1e-12));
  }
}

TEST_CASE("running mean baseline warms up then decays") {
  RunningMeanBaseline baseline;
  CHECK(baseline.value() == 0.0);
  baseline.update(10.0);
  CHECK(baseline.value() == 10.0);
  baseline.update(20.0);
  CHECK(baseline.value() == doctest::Approx(11.0).epsilon(1e-12));
  baseline.update(11.0);
  CHECK(baseline.value() == doctest::Approx(11.0).epsilon(1e-12));
}

TEST_CASE("score estimator reproduces the manual computation") {
  const SquaredErrorObjective obj({4.0, 1.0});
  const DistributionSpec spec = DistributionSpec::poisson(2.0);

  // The estimator multiplies the whole-sample objective by the summed
  // per-draw scores: (F(z) - b) * sum_i d log p(z_i).
  NoiseSource mirror(21);
  std::vector<long> draws;
  for (int i = 0; i < 2; ++i) draws.push_back(sample_scalar(spec, mirror));
  double f = 0.0;
  double score_sum = 0.0;
  for (int i = 0; i < 2; ++i) {
    const std::vector<double> z = {
        static_cast<double>(draws[static_cast<std::size_t>(i)])};
    f += obj.block_value(i, z);
    const std::vector<long> s = {draws[static_cast<std::size_t>(i)]};
    score_sum += score_function(spec, s)[0];
  }
  const std::vector<double> expected = {f * score_sum};

  NoiseSource source(21);
  const GradEstimate g = reinforce(obj, spec, source);
  CHECK(g.loss_value == doctest::Approx(f).epsilon(1e-12));
  CHECK(g.sample_count == 2);
  CHECK(g.grad[0] == doctest::Approx(expected[0]).epsilon(1e-10));
}

TEST_CASE("score estimator subtracts the running baseline") {
  const SquaredErrorObjective obj({4.0});
  const DistributionSpec spec = DistributionSpec::poisson(2.0);
  RunningMeanBaseline baseline;
  baseline.update(6.0);

  NoiseSource mirror(33);
  const long k = sample_scalar(spec, mirror);
  const std::vector<double> z = {static_cast<double>(k)};
  const double f = obj.block_value(0, z);
  const std::vector<long> s = {k};
  const double expected = (f - 6.0) * score_function(spec, s)[0];

  NoiseSource source(33);
  const GradEstimate g = reinforce(obj, spec, source, &baseline);
  CHECK(g.grad[0] == doctest::Approx(expected).epsilon(1e-10));
  // The baseline absorbed f after the estimate.
  CHECK(baseline.value() == doctest::Approx(0.9 * 6.0 + 0.1 * f).epsilon(1e-12));
}

TEST_CASE("score estimator is unbiased") {
  const SquaredErrorObjective obj({4.0});
  const DistributionSpec spec = DistributionSpec::poisson(2.0);
  // Reference over the de-facto-complete support.
  const GradEstimate exact = exact_gradient(obj, spec, 60);
  NoiseSource source(101);
  const int repeats = 40000;
  const MomentStats stats = estimate_moments(
      [&](int) { return reinforce(obj, spec, source); }, repeats, &exact);
  const double se = std::sqrt(stats.variance[0] / repeats);
  CHECK(std::abs(stats.bias[0]) < 4.0 * se);
}

TEST_CASE("score estimator is unbiased for every family") {
  // Probability-vector families report gradients that are only identified up
  // to a multiple of the all-ones direction (probabilities sum to one), so
  // the comparison runs in the unconstrained preimage where that direction
  // is projected out. Scalar families pass through their preimage unchanged
  // up to the smooth reparameterization.
  struct Case {
    DistributionSpec spec;
    int trunc;
    std::vector<double> targets;
    int block;
  };
  const std::vector<Case> cases = {
      {DistributionSpec::poisson(2.5), 40, {4.0}, 1},
      {DistributionSpec::binomial(8, 0.35), 9, {4.0}, 1},
      {DistributionSpec::geometric(0.45), 60, {4.0}, 1},
      {DistributionSpec::negative_binomial(2.0, 0.5), 80, {4.0}, 1},
      {DistributionSpec::bernoulli(0.3), 2, {0.8}, 1},
      {DistributionSpec::categorical({0.2, 0.3, 0.5}), 3, {1.5}, 1},
      {DistributionSpec::multinomial(2, {0.5, 0.3, 0.2}), 0, {1.0, 0.7, 0.3}, 3},
  };
  const int repeats = 30000;
  for (const Case& c : cases) {
    CAPTURE(family_name(c.spec.family));
    const SquaredErrorObjective obj(c.targets, c.block);
    const ParamSpace space(c.spec);
    const std::vector<double> pre = space.to_preimage(space.natural(c.spec));
    auto mapped = [&](GradEstimate g) {
      g.grad = space.preimage_grad(pre, g.grad);
      return g;
    };
    const GradEstimate exact = mapped(exact_gradient(obj, c.spec, c.trunc));
    NoiseSource source(211);
    const MomentStats stats = estimate_moments(
        [&](int) { return mapped(reinforce(obj, c.spec, source)); }, repeats,
        &exact);
    for (std::size_t j = 0; j < stats.bias.size(); ++j) {
      const double se = std::sqrt(stats.variance[j] / repeats);
      CAPTURE(j);
      CHECK(std::abs(stats.bias[j]) < 4.0 * se + 1e-9);
    }
  }
}

TEST_CASE("relaxed gradient bias falls as the truncation absorbs the tail") {
  // With lambda 20, truncating at 22 folds 44% of the mass into the last
  // bin and badly distorts the gradient; at 50 the folded tail is below
  // 1e-8 and only the smoothing bias of the relaxation remains.
  const SquaredErrorObjective obj({25.0});
  const DistributionSpec spec = DistributionSpec::poisson(20.0);
  const GradEstimate exact = exact_gradient(obj, spec, 80);
  double coarse = 0.0;
  double fine = 0.0;
  for (int n : {22, 50}) {
    NoiseSource source(321);
    const MomentStats stats = estimate_moments(
        [&](int) { return gengs_explicit(obj, spec, n, 0.5, source); }, 20000,
        &exact);
    (n == 22 ? coarse : fine) = std::abs(stats.bias[0]);
  }
  CHECK(fine < coarse);
}

TEST_CASE("parameter spaces round-trip and chain correctly") {
  struct Case {
    DistributionSpec spec;
    std::vector<std::string> names;
  };
  const Case cases[] = {
      {DistributionSpec::poisson(2.5), {"lambda"}},
      {DistributionSpec::binomial(6, 0.3), {"p"}},
      {DistributionSpec::geometric(0.45), {"p"}},
      {DistributionSpec::negative_binomial(2.0, 0.6), {"r", "p"}},
      {DistributionSpec::bernoulli(0.7), {"p"}},
  };
  for (const Case& c : cases) {
    CAPTURE(family_name(c.spec.family));
    const ParamSpace space(c.spec);
    CHECK(space.names() == c.names);
    const std::vector<double> nat = space.natural(c.spec);
    const std::vector<double> pre = space.to_preimage(nat);
    const std::vector<double> back = space.from_preimage(pre);
    REQUIRE(back.size() == nat.size());
    for (std::size_t j = 0; j < nat.size(); ++j) {
      CHECK(back[j] == doctest::Approx(nat[j]).epsilon(1e-10));
    }
    const DistributionSpec rebuilt = space.with_natural(c.spec, back);
    CHECK_NOTHROW(validate(rebuilt));

    // preimage_grad is the jacobian-transpose product: check against a
    // finite difference of dot(g, from_preimage(pre)).
    std::vector<double> g(nat.size());
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = 1.0 + 0.5 * static_cast<double>(j);
    const std::vector<double> mapped = space.preimage_grad(pre, g);
    for (std::size_t j = 0; j < pre.size(); ++j) {
      auto dotted = [&](double x) {
        std::vector<double> p2 = pre;
        p2[j] = x;
        const std::vector<double> n2 = space.from_preimage(p2);
        double acc = 0.0;
        for (std::size_t i = 0; i < n2.size(); ++i) acc += g[i] * n2[i];
        return acc;
      };
      CHECK(mapped[j] ==
            doctest::Approx(fd_pair(dotted, pre[j])).epsilon(1e-5));
    }
  }

  // Probability vectors map through softmax logits.
  const DistributionSpec cat = DistributionSpec::categorical({0.2, 0.3, 0.5});
  const ParamSpace space(cat);
  CHECK(space.count() == 3);
  const std::vector<double> nat = space.natural(cat);
  const std::vector<double> back = space.from_preimage(space.to_preimage(nat));
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(back[j] == doctest::Approx(nat[j]).epsilon(1e-10));
  }
  std::vector<double> g = {2.0, -1.0, 0.5};
  const std::vector<double> pre = space.to_preimage(nat);
  const std::vector<double> mapped = space.preimage_grad(pre, g);
  double mean_g = 0.0;
  for (std::size_t j = 0; j < 3; ++j) mean_g += nat[j] * g[j];
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(mapped[j] ==
          doctest::Approx(nat[j] * (g[j] - mean_g)).epsilon(1e-9));
  }

  // Binomial keeps its structural trial count through with_natural.
  const ParamSpace bspace(DistributionSpec::binomial(6, 0.3));
  const DistributionSpec upd = bspace.with_natural(
      DistributionSpec::binomial(6, 0.3), std::vector<double>{0.9});
  CHECK(upd.params[0] == 6.0);
  CHECK(upd.params[1] == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("moment accumulation matches a two-pass computation") {
  std::vector<GradEstimate> runs(5);
  for (int i = 0; i < 5; ++i) {
    runs[static_cast<std::size_t>(i)].grad = {static_cast<double>(i)};
    runs[static_cast<std::size_t>(i)].loss_value = 2.0 * i;
  }
  const MomentStats stats = estimate_moments(
      [&](int i) { return runs[static_cast<std::size_t>(i)]; }, 5);
  CHECK(stats.mean[0] == doctest::Approx(2.0).epsilon(1e-12));
  // Unbiased sample variance of {0,1,2,3,4} is 2.5.
  CHECK(stats.variance[0] == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(stats.loss_mean == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(stats.bias.empty());

  GradEstimate exact;
  exact.grad = {1.5};
  const MomentStats with_bias = estimate_moments(
      [&](int i) { return runs[static_cast<std::size_t>(i)]; }, 5, &exact);
  REQUIRE(with_bias.bias.size() == 1);
  CHECK(with_bias.bias[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("identical seeds collapse the moment variance to zero") {
  const SquaredErrorObjective obj({4.0});
  const DistributionSpec spec = DistributionSpec::poisson(2.0);
  const MomentStats stats = estimate_moments(
      [&](int) {
        NoiseSource source(7);
        return gengs_explicit(obj, spec, 10, 0.5, source);
      },
      50);
  CHECK(stats.variance[0] == 0.0);
}

TEST_CASE("objective and family shapes must agree") {
  const SquaredErrorObjective vec({1.0, 1.0}, 2);
  NoiseSource source(1);
  CHECK_THROWS(gengs_explicit(vec, DistributionSpec::poisson(2.0), 8, 0.5,
                              source));
  const SquaredErrorObjective scalar({1.0});
  CHECK_THROWS(gengs_explicit(scalar,
                              DistributionSpec::multinomial(2, {0.5, 0.5}), 0,
                              0.5, source));
}

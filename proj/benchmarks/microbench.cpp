// SPDX-License-Identifier: Apache-2.0
//
// Microbenchmarks for the hot paths: truncation, relaxed sampling, and the
// gradient estimators. Run the gengs_benchmarks binary directly; it is not
// part of the test suite.

#include <benchmark/benchmark.h>

#include <vector>

#include "gengs/distributions.hpp"
#include "gengs/estimators.hpp"
#include "gengs/random.hpp"
#include "gengs/relaxation.hpp"
#include "gengs/tape.hpp"

namespace {

using namespace gengs;

void BM_truncate(benchmark::State& state) {
  const DistributionSpec spec = DistributionSpec::poisson(20.0);
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(truncate(spec, n));
  }
}
BENCHMARK(BM_truncate)->Arg(16)->Arg(64)->Arg(256);

void BM_gumbel_softmax(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const TruncatedDistribution td =
      truncate(DistributionSpec::poisson(20.0), n);
  NoiseSource source(1);
  const GumbelNoise noise = sample_gumbel_vector(source, n);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(gumbel_softmax(td.pi, noise, 0.5, tape));
  }
}
BENCHMARK(BM_gumbel_softmax)->Arg(16)->Arg(64)->Arg(256);

void BM_pathwise_gradient(benchmark::State& state) {
  const SquaredErrorObjective obj({18.0});
  const DistributionSpec spec = DistributionSpec::poisson(20.0);
  const int n = static_cast<int>(state.range(0));
  NoiseSource source(2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gengs_explicit(obj, spec, n, 0.5, source));
  }
}
BENCHMARK(BM_pathwise_gradient)->Arg(16)->Arg(50)->Arg(128);

void BM_rao_blackwellized_gradient(benchmark::State& state) {
  const SquaredErrorObjective obj({18.0});
  const DistributionSpec spec = DistributionSpec::poisson(20.0);
  NoiseSource source(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gengs_rb(obj, spec, 50, 0.5, source));
  }
}
BENCHMARK(BM_rao_blackwellized_gradient);

void BM_score_gradient(benchmark::State& state) {
  const SquaredErrorObjective obj({18.0});
  const DistributionSpec spec = DistributionSpec::poisson(20.0);
  NoiseSource source(4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(reinforce(obj, spec, source));
  }
}
BENCHMARK(BM_score_gradient);

void BM_exact_gradient(benchmark::State& state) {
  const SquaredErrorObjective obj({18.0});
  const DistributionSpec spec = DistributionSpec::poisson(20.0);
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_gradient(obj, spec, n));
  }
}
BENCHMARK(BM_exact_gradient)->Arg(50)->Arg(200);

void BM_tape_backward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<double> logits(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    logits[static_cast<std::size_t>(i)] = 0.01 * i;
  }
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  for (auto _ : state) {
    Tape tape;
    Var v = tape.input(logits);
    Var s = tape.softmax_with_temperature(v, 0.5);
    Var out = tape.dot(s, tape.constant(w));
    tape.backward(out);
    benchmark::DoNotOptimize(v.adjoints());
  }
}
BENCHMARK(BM_tape_backward)->Arg(16)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();

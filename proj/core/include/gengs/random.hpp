// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace gengs {

// Deterministic noise source: xoshiro256++ with splitmix64 seeding. The
// stream depends only on the 64-bit seed, never on platform or standard
// library internals, so runs replay byte-for-byte everywhere.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed);

  // Uniform draw strictly inside (0, 1). Built as (k + 0.5) / 2^53 from the
  // top 53 bits, so 0 and 1 are unreachable by construction.
  double uniform();

  std::uint64_t seed() const { return seed_; }

  // Number of uniforms drawn so far.
  std::uint64_t stream_position() const { return position_; }

 private:
  std::uint64_t next_u64();

  std::uint64_t seed_ = 0;
  std::uint64_t position_ = 0;
  std::array<std::uint64_t, 4> state_{};
};

// One standard Gumbel draw per category.
struct GumbelNoise {
  std::vector<double> g;
};

// -log(-log u). Strictly increasing on (0, 1) and finite there.
double gumbel_from_uniform(double u);

GumbelNoise sample_gumbel_vector(NoiseSource& source, int n);

// Mixes a base seed with lane indices into an independent stream seed.
// Replicates and measurement passes get disjoint streams this way.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t lane_a,
                          std::uint64_t lane_b = 0);

}  // namespace gengs

// SPDX-License-Identifier: Apache-2.0
#include "gengs/random.hpp"

#include <cmath>
#include <stdexcept>

namespace gengs {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t v, int k) {
  return (v << k) | (v >> (64 - k));
}

}  // namespace

NoiseSource::NoiseSource(std::uint64_t seed) : seed_(seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) {
    word = splitmix64(s);
  }
}

std::uint64_t NoiseSource::next_u64() {
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double NoiseSource::uniform() {
  ++position_;
  const std::uint64_t bits = next_u64() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double gumbel_from_uniform(double u) {
  if (!(u > 0.0) || !(u < 1.0)) {
    throw std::invalid_argument("gumbel_from_uniform: u must lie in (0, 1)");
  }
  return -std::log(-std::log(u));
}

GumbelNoise sample_gumbel_vector(NoiseSource& source, int n) {
  if (n < 1) {
    throw std::invalid_argument("sample_gumbel_vector: n must be >= 1");
  }
  GumbelNoise noise;
  noise.g.resize(static_cast<std::size_t>(n));
  for (auto& g : noise.g) {
    g = gumbel_from_uniform(source.uniform());
  }
  return noise;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t lane_a,
                          std::uint64_t lane_b) {
  std::uint64_t x = base;
  std::uint64_t h = splitmix64(x);
  x ^= lane_a + 0x9e3779b97f4a7c15ULL;
  h ^= splitmix64(x);
  x ^= lane_b + 0xd1b54a32d192ed03ULL;
  h ^= splitmix64(x);
  return h;
}

}  // namespace gengs

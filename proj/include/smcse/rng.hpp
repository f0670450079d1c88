// Copyright 2026 The smcse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SMCSE_RNG_HPP
#define SMCSE_RNG_HPP

/**
 * \file
 * \brief Random number generation with a pinned draw protocol.
 *
 * Every distribution used by the library is sampled here from raw 64-bit
 * engine output, so the number and order of draws per operation is fixed by
 * this file alone and results do not depend on the standard library's
 * distribution implementations. The mapping is:
 *
 *  - uniform(): one 64-bit draw, (x >> 11) * 2^-53, in [0, 1)
 *  - normal():  two uniforms, Box-Muller cosine branch
 *  - categorical(cdf): one uniform, binary search in the cumulative table
 *
 * Replications are given decorrelated seeds with derive_seed(master, index),
 * a SplitMix64 hash of the master seed and the replication index.
 */

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace smcse {

/// SplitMix64 finalizing hash. Used to spread user seeds over 64-bit space.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for an indexed stream (replication, data simulation, ...) derived
/// from a master seed. Distinct indexes give decorrelated streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x9e3779b97f4a7c15ULL));
}

/// Random source wrapping std::mt19937_64 with the drawing rules above.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Standard normal. Consumes exactly two uniforms (no state is cached).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    // 1 - u1 lies in (0, 1], so the log is finite.
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Index i with probability cdf[i] - cdf[i-1]. cdf must be nondecreasing
  /// with cdf.back() == 1. Consumes exactly one uniform.
  std::size_t categorical(std::span<const double> cdf) {
    const double u = uniform();
    std::size_t lo = 0;
    std::size_t hi = cdf.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (u < cdf[mid]) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    return lo;
  }

  /// Bernoulli(p). Consumes exactly one uniform.
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 gen_;
};

/// Inclusive cumulative sums of a weight vector, with the final entry forced
/// to exactly 1 so that categorical() can never fall off the end.
inline std::vector<double> cumulative(std::span<const double> weights) {
  std::vector<double> cdf(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cdf[i] = acc;
  }
  if (!cdf.empty()) cdf.back() = 1.0;
  return cdf;
}

}  // namespace smcse

#endif  // SMCSE_RNG_HPP

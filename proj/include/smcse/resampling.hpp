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

#ifndef SMCSE_RESAMPLING_HPP
#define SMCSE_RESAMPLING_HPP

/**
 * \file
 * \brief Resampling schemes, the coefficient-of-variation trigger, and
 *        group partitioning for sample-splitting runs.
 */

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smcse/common.hpp"
#include "smcse/rng.hpp"

namespace smcse {

/// How offspring counts are drawn at a resampling stage.
enum class Scheme : std::uint8_t {
  kMultinomial,       ///< i.i.d. parent draws from the weight distribution
  kResidualBernoulli  ///< floor(M * W_i) copies plus a Bernoulli remainder
};

/// When the filter resamples. The threshold test compares the squared
/// coefficient of variation of the current weights against c, inclusive:
/// resample exactly when cv^2 >= c. Resampling never happens at the final
/// stage regardless of policy.
struct ResamplePolicy {
  enum class Kind : std::uint8_t { kAlways, kNever, kCvThreshold } kind = Kind::kAlways;
  double c = 0.0;

  static ResamplePolicy Always() { return {Kind::kAlways, 0.0}; }
  static ResamplePolicy Never() { return {Kind::kNever, 0.0}; }
  static ResamplePolicy CvThreshold(double c) { return {Kind::kCvThreshold, c}; }
};

/// Squared coefficient of variation of normalized weights:
///   cv^2 = m^-1 * sum_i (m V_i)^2 - 1.
/// V must be a probability vector (entries >= 0, sum within 1e-9 of 1).
inline double cv_squared(std::span<const double> weights) {
  if (weights.empty()) {
    throw ContractViolationError("cv_squared: empty weight vector");
  }
  const double m = static_cast<double>(weights.size());
  double total = 0.0;
  double sumsq = 0.0;
  for (double v : weights) {
    if (!(v >= 0.0)) {
      throw ContractViolationError("cv_squared: weights must be nonnegative");
    }
    total += v;
    sumsq += v * v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractViolationError("cv_squared: weights must sum to 1, got " + std::to_string(total));
  }
  return m * sumsq - 1.0;
}

/// True when the policy asks for a resampling step given the current
/// normalized weights. stage is the stage just propagated; horizon is T.
inline bool should_resample(const ResamplePolicy& policy, std::span<const double> weights,
                            int stage, int horizon) {
  if (stage >= horizon) {
    throw ContractViolationError("should_resample: no resampling at or past the final stage");
  }
  switch (policy.kind) {
    case ResamplePolicy::Kind::kAlways:
      return true;
    case ResamplePolicy::Kind::kNever:
      return false;
    case ResamplePolicy::Kind::kCvThreshold:
      return cv_squared(weights) >= policy.c;
  }
  return false;
}

/// Offspring assignment of one resampling step. parents lists the ancestor
/// index of each offspring in the order the new population is laid out;
/// counts[i] is the number of offspring of particle i, so
/// counts[i] == #(j : parents[j] == i) and parents.size() == sum(counts).
struct ResampleDraw {
  std::vector<std::int64_t> counts;
  std::vector<std::int32_t> parents;
};

/// Draws m i.i.d. parents from the normalized weights. parents keeps the
/// draw order, which is what genealogy-based estimators consume.
inline ResampleDraw multinomial_draw(std::span<const double> weights, std::size_t m, Rng& rng) {
  if (weights.empty() || m == 0) {
    throw ContractViolationError("multinomial_draw: empty input");
  }
  const std::vector<double> cdf = cumulative(weights);
  ResampleDraw draw;
  draw.counts.assign(weights.size(), 0);
  draw.parents.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t pick = rng.categorical(cdf);
    draw.parents[j] = static_cast<std::int32_t>(pick);
    ++draw.counts[pick];
  }
  return draw;
}

/// Residual-Bernoulli offspring counts: particle i gets floor(M W_i) copies
/// plus a Bernoulli(frac(M W_i)) extra, so E[counts[i]] = M W_i exactly and
/// the population size may drift. One uniform is consumed per particle
/// whether or not the fractional part is zero. parents lists each surviving
/// particle's copies contiguously in ascending particle order.
inline ResampleDraw residual_bernoulli_draw(std::span<const double> weights, std::size_t m,
                                            Rng& rng) {
  if (weights.empty() || m == 0) {
    throw ContractViolationError("residual_bernoulli_draw: empty input");
  }
  ResampleDraw draw;
  draw.counts.assign(weights.size(), 0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double target = static_cast<double>(m) * weights[i];
    const double base = std::floor(target);
    const double frac = target - base;
    std::int64_t n = static_cast<std::int64_t>(base);
    if (rng.uniform() < frac) ++n;
    draw.counts[i] = n;
    for (std::int64_t k = 0; k < n; ++k) {
      draw.parents.push_back(static_cast<std::int32_t>(i));
    }
  }
  return draw;
}

/// Variance factor gamma(x) = (x - floor(x)) * (1 - x + floor(x)) / x of the
/// Bernoulli rounding residual at mean x. Zero at integers, 0.5 at x = 0.5.
inline double gamma_fn(double x) {
  if (!(x > 0.0)) {
    throw ContractViolationError("gamma_fn: argument must be positive");
  }
  const double frac = x - std::floor(x);
  return frac * (1.0 - frac) / x;
}

/// Half-open [first, last) index ranges splitting m particles into k groups
/// of size floor(m / k); the last group absorbs the remainder.
struct GroupBounds {
  std::vector<std::size_t> first;
  std::vector<std::size_t> last;
  [[nodiscard]] std::size_t size(std::size_t g) const { return last[g] - first[g]; }
  [[nodiscard]] std::size_t groups() const { return first.size(); }
};

inline GroupBounds make_group_bounds(std::size_t m, std::size_t k) {
  if (k < 1 || k > m) {
    throw InvalidConfigError("group count must satisfy 1 <= k <= m");
  }
  const std::size_t r = m / k;
  GroupBounds bounds;
  for (std::size_t g = 0; g < k; ++g) {
    bounds.first.push_back(g * r);
    bounds.last.push_back(g + 1 == k ? m : (g + 1) * r);
  }
  return bounds;
}

/// Multinomial resampling applied independently inside each group of a
/// partitioned population, each group normalized by its own weight sum.
/// weights are the m unnormalized (linear-scale) weights. Parent indexes are
/// global. k = 1 reduces to plain multinomial resampling.
inline std::vector<ResampleDraw> stratified_group_draws(std::span<const double> weights,
                                                        const GroupBounds& bounds, Rng& rng) {
  std::vector<ResampleDraw> draws;
  draws.reserve(bounds.groups());
  for (std::size_t g = 0; g < bounds.groups(); ++g) {
    const std::size_t n = bounds.size(g);
    std::vector<double> local(weights.begin() + static_cast<std::ptrdiff_t>(bounds.first[g]),
                              weights.begin() + static_cast<std::ptrdiff_t>(bounds.last[g]));
    double total = 0.0;
    for (double w : local) total += w;
    if (total <= 0.0) {
      throw DegenerateWeightsError("stratified_group_draws: group " + std::to_string(g) +
                                       " has zero total weight",
                                   -1);
    }
    for (double& w : local) w /= total;
    ResampleDraw draw = multinomial_draw(local, n, rng);
    for (auto& p : draw.parents) p += static_cast<std::int32_t>(bounds.first[g]);
    draws.push_back(std::move(draw));
  }
  return draws;
}

}  // namespace smcse

#endif  // SMCSE_RESAMPLING_HPP

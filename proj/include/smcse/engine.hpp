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

#ifndef SMCSE_ENGINE_HPP
#define SMCSE_ENGINE_HPP

/**
 * \file
 * \brief The particle filter: population bookkeeping, propagation,
 *        resampling, and full filter passes.
 *
 * The engine tracks everything the standard-error estimators need at no
 * extra simulation cost:
 *
 *  - origins: the index of each particle's initial ancestor, carried
 *    through every resampling event;
 *  - genealogy: the parent map of every resampling event;
 *  - log_v: each particle's accumulated log incremental weight since the
 *    last resampling event (the weights the next resampling uses);
 *  - log_cumw: the accumulated log incremental weight over the whole path.
 *
 * All weights live in log space end to end; normalization always subtracts
 * the maximum before exponentiating.
 *
 * Draw order is pinned: within a stage, proposals are drawn in particle
 * order; a resampling event then consumes its draws (one categorical draw
 * per offspring slot for multinomial, one uniform per particle for
 * residual-Bernoulli). Given the same seed, model, size, policy, and
 * scheme, a run is bit-for-bit reproducible.
 */

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smcse/common.hpp"
#include "smcse/estimators.hpp"
#include "smcse/model.hpp"
#include "smcse/resampling.hpp"
#include "smcse/rng.hpp"

namespace smcse {

template <FilterModel M>
struct Population {
  int stage = 0;
  std::size_t m_init = 0;
  std::vector<typename M::State> states;
  std::vector<double> log_v;             ///< log weight since the last resampling
  std::vector<double> log_cumw;          ///< log weight over the whole path
  std::vector<std::int32_t> origins;     ///< initial-ancestor index per particle
  Genealogy genealogy;                   ///< parent maps of past resampling events
  double log_wbar_prefix = 0.0;          ///< sum of log mean incremental weights
  double log_block_prefix = 0.0;         ///< sum of log mean block weights at past events
  int last_resample = 0;                 ///< stage of the most recent event (0 if none)

  std::vector<double> cv2_trace;
  std::vector<double> log_mean_weight_trace;
  std::vector<std::size_t> size_trace;
  double max_identity_gap = 0.0;

  [[nodiscard]] std::size_t size() const { return states.size(); }
};

/// Fresh stage-0 population of m particles, each its own ancestor.
template <FilterModel M>
Population<M> init_population(const M& model, std::size_t m) {
  if (m < 1) {
    throw InvalidConfigError("population size must be at least 1");
  }
  Population<M> pop;
  pop.m_init = m;
  pop.states.assign(m, model.initial_state());
  pop.log_v.assign(m, 0.0);
  pop.log_cumw.assign(m, 0.0);
  pop.origins.resize(m);
  std::iota(pop.origins.begin(), pop.origins.end(), 0);
  pop.genealogy.horizon = model.horizon();
  return pop;
}

namespace detail {

inline std::string format_cv2_tail(const std::vector<double>& cv2_trace) {
  std::string out;
  const std::size_t first = cv2_trace.size() > 5 ? cv2_trace.size() - 5 : 0;
  for (std::size_t i = first; i < cv2_trace.size(); ++i) {
    if (!out.empty()) out += ", ";
    out += std::to_string(cv2_trace[i]);
  }
  return out.empty() ? "none" : out;
}

}  // namespace detail

/// Advances every particle one stage: proposes in particle order, applies
/// the incremental weights, and records the stage diagnostics. Throws
/// DegenerateWeightsError when every particle weight becomes zero.
template <FilterModel M>
void propagate(Population<M>& pop, const M& model, Rng& rng) {
  const int t = pop.stage + 1;
  if (t > model.horizon()) {
    throw ContractViolationError("propagate: already at the horizon");
  }
  std::vector<double> lw(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    typename M::State next = model.propose(t, pop.states[i], rng);
    lw[i] = model.log_weight(t, pop.states[i], next);
    pop.states[i] = std::move(next);
    pop.log_v[i] += lw[i];
    pop.log_cumw[i] += lw[i];
  }
  pop.stage = t;
  const double log_mean_w = logmeanexp(lw);
  pop.log_wbar_prefix += log_mean_w;
  pop.log_mean_weight_trace.push_back(log_mean_w);
  pop.size_trace.push_back(pop.size());
  const std::vector<double> norm = softmax(pop.log_v);
  double total = 0.0;
  for (double w : norm) total += w;
  if (!(total > 0.0)) {
    throw DegenerateWeightsError("every particle weight vanished at stage " + std::to_string(t) +
                                     "; recent cv^2 trace: " +
                                     detail::format_cv2_tail(pop.cv2_trace),
                                 t);
  }
  pop.cv2_trace.push_back(cv_squared(norm));
}

/// Replaces the population by the offspring assignment of one resampling
/// event: offspring j is a copy of particle draw.parents[j] and inherits
/// its origin and path weight; block weights reset to zero. Also verifies,
/// per surviving particle, the identity relating the block weight to the
/// ratio of pre- and post-event importance corrections, and records the
/// worst log-scale gap seen.
template <FilterModel M>
void apply_resample(Population<M>& pop, const ResampleDraw& draw) {
  std::int64_t total = 0;
  for (std::int64_t c : draw.counts) total += c;
  if (total == 0) {
    throw PopulationExtinctionError(
        "resampling produced zero offspring at stage " + std::to_string(pop.stage), pop.stage);
  }
  if (static_cast<std::size_t>(total) != draw.parents.size() ||
      draw.counts.size() != pop.size()) {
    throw ContractViolationError("apply_resample: counts and parents disagree");
  }

  const double log_vbar = logmeanexp(pop.log_v);
  // Weight identity at this event: for every particle with positive weight,
  // log(M W_i) must equal the difference of the importance corrections
  // before and after the event. The two sides take different floating-point
  // paths, so the gap is a real consistency signal.
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (pop.log_v[i] == kNegInf) continue;
    const double log_h_prev = pop.log_block_prefix - (pop.log_cumw[i] - pop.log_v[i]);
    const double log_h_tilde = (pop.log_block_prefix + log_vbar) - pop.log_cumw[i];
    const double gap = std::abs((log_h_prev - log_h_tilde) - (pop.log_v[i] - log_vbar));
    pop.max_identity_gap = std::max(pop.max_identity_gap, gap);
  }
  pop.log_block_prefix += log_vbar;

  const std::size_t new_size = draw.parents.size();
  std::vector<typename M::State> states(new_size);
  std::vector<double> cumw(new_size);
  std::vector<std::int32_t> origins(new_size);
  for (std::size_t j = 0; j < new_size; ++j) {
    const auto p = static_cast<std::size_t>(draw.parents[j]);
    states[j] = pop.states[p];
    cumw[j] = pop.log_cumw[p];
    origins[j] = pop.origins[p];
  }
  pop.states = std::move(states);
  pop.log_cumw = std::move(cumw);
  pop.origins = std::move(origins);
  pop.log_v.assign(new_size, 0.0);
  pop.genealogy.resample_times.push_back(pop.stage);
  pop.genealogy.parents.push_back(draw.parents);
  pop.last_resample = pop.stage;
}

/// Index of the stage-s ancestor of every current particle, found by
/// composing the parent maps of all resampling events at stages >= s.
/// s = 1 recovers the origins array.
template <FilterModel M>
std::vector<std::int32_t> ancestor_labels(const Population<M>& pop, int s) {
  if (s < 1 || s > pop.stage) {
    throw ContractViolationError("ancestor_labels: stage out of range");
  }
  std::vector<std::int32_t> labels(pop.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int32_t>(i);
  for (std::size_t e = pop.genealogy.parents.size(); e-- > 0;) {
    if (pop.genealogy.resample_times[e] < s) break;
    const auto& pmap = pop.genealogy.parents[e];
    for (auto& lab : labels) lab = pmap[static_cast<std::size_t>(lab)];
  }
  return labels;
}

struct RunOptions {
  Scheme scheme = Scheme::kMultinomial;
  ResamplePolicy policy = ResamplePolicy::Always();
  std::size_t split_groups = 1;      ///< >= 2 turns on sample splitting
  bool genealogy_variance = true;    ///< compute the shared-ancestry comparator
};

template <FilterModel M>
struct RunResult {
  FilterOutput output;
  std::vector<Population<M>> pops;  ///< one population, or one per split group
};

namespace detail {

/// Drives one population from stage 0 to the horizon under the policy.
template <FilterModel M>
void run_pass(Population<M>& pop, const M& model, const RunOptions& options, Rng& rng) {
  const int horizon = model.horizon();
  for (int t = 1; t <= horizon; ++t) {
    propagate(pop, model, rng);
    if (t == horizon) break;  // never resample at the final stage
    const std::vector<double> norm = softmax(pop.log_v);
    if (!should_resample(options.policy, norm, t, horizon)) continue;
    const ResampleDraw draw = options.scheme == Scheme::kMultinomial
                                  ? multinomial_draw(norm, pop.size(), rng)
                                  : residual_bernoulli_draw(norm, pop.size(), rng);
    apply_resample(pop, draw);
  }
}

template <FilterModel M>
void fill_psi(const M& model, const Population<M>& pop, std::vector<double>& psi0,
              std::vector<double>& psi1) {
  psi0.resize(pop.size());
  psi1.resize(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const std::array<double, 2> value = model.functional(pop.states[i]);
    psi0[i] = value[0];
    psi1[i] = value[1];
  }
}

}  // namespace detail

/// One full filter pass. With options.split_groups >= 2 the population is
/// partitioned into that many independent sub-filters (each resampling only
/// within itself, sized floor(m/k) with the last group absorbing the
/// remainder); the reported estimate is the unweighted mean of the group
/// estimates and the sample-splitting variance replaces the single-pass
/// estimators. Groups run to completion one after another, so the draw
/// order is still fully determined.
template <FilterModel M>
RunResult<M> run_filter(const M& model, std::size_t m, const RunOptions& options, Rng& rng) {
  const auto t_start = std::chrono::steady_clock::now();
  RunResult<M> result;
  FilterOutput& out = result.output;
  out.functional_dim = model.functional_dim();
  out.m_init = m;

  if (options.split_groups <= 1) {
    Population<M> pop = init_population(model, m);
    detail::run_pass(pop, model, options, rng);

    const std::vector<double> norm = softmax(pop.log_v);
    std::vector<double> psi0;
    std::vector<double> psi1;
    detail::fill_psi(model, pop, psi0, psi1);
    for (int c = 0; c < out.functional_dim; ++c) {
      const std::vector<double>& psi = (c == 0) ? psi0 : psi1;
      const auto uc = static_cast<std::size_t>(c);
      out.estimate[uc] = point_estimate(norm, psi);
      if (m >= 2) {
        out.var_ancestral[uc] = var_ancestral(norm, pop.origins, psi, m, out.estimate[uc]);
        if (options.genealogy_variance) {
          // var_genealogy estimates the variance of the estimate itself, not
          // of the sqrt(m)-scaled error, so the shared output convention
          // (se = sqrt(var / m)) needs it multiplied by m here.
          out.var_genealogy[uc] = static_cast<double>(m) *
                                  var_genealogy(norm, psi, out.estimate[uc], pop.genealogy);
        }
      }
    }
    out.diag.cv2_trace = pop.cv2_trace;
    out.diag.log_mean_weight = pop.log_mean_weight_trace;
    out.diag.resample_times = pop.genealogy.resample_times;
    out.diag.size_trace = pop.size_trace;
    out.diag.max_weight_identity_gap = pop.max_identity_gap;
    result.pops.push_back(std::move(pop));
  } else {
    const GroupBounds bounds = make_group_bounds(m, options.split_groups);
    std::vector<SplitGroup> groups0;
    std::vector<SplitGroup> groups1;
    for (std::size_t g = 0; g < bounds.groups(); ++g) {
      Population<M> pop = init_population(model, bounds.size(g));
      detail::run_pass(pop, model, options, rng);

      SplitGroup sg0;
      sg0.norm_w = softmax(pop.log_v);
      sg0.origins.assign(pop.origins.begin(), pop.origins.end());
      sg0.m_init = pop.m_init;
      SplitGroup sg1 = sg0;
      detail::fill_psi(model, pop, sg0.psi, sg1.psi);
      sg0.estimate = point_estimate(sg0.norm_w, sg0.psi);
      sg1.estimate = out.functional_dim > 1 ? point_estimate(sg1.norm_w, sg1.psi) : 0.0;
      groups0.push_back(std::move(sg0));
      groups1.push_back(std::move(sg1));

      out.diag.resample_times.insert(out.diag.resample_times.end(),
                                     pop.genealogy.resample_times.begin(),
                                     pop.genealogy.resample_times.end());
      out.diag.max_weight_identity_gap =
          std::max(out.diag.max_weight_identity_gap, pop.max_identity_gap);
      // size_trace holds per-stage totals across groups.
      if (out.diag.size_trace.size() < pop.size_trace.size()) {
        out.diag.size_trace.resize(pop.size_trace.size(), 0);
      }
      for (std::size_t s = 0; s < pop.size_trace.size(); ++s) {
        out.diag.size_trace[s] += pop.size_trace[s];
      }
      result.pops.push_back(std::move(pop));
    }
    for (int c = 0; c < out.functional_dim; ++c) {
      const std::vector<SplitGroup>& groups = (c == 0) ? groups0 : groups1;
      double acc = 0.0;
      for (const auto& g : groups) acc += g.estimate;
      const auto uc = static_cast<std::size_t>(c);
      out.estimate[uc] = acc / static_cast<double>(groups.size());
      out.var_split[uc] = var_sample_split(groups);
    }
  }

  out.diag.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t_start)
                         .count();
  return result;
}

/// Convenience overload seeding a fresh generator.
template <FilterModel M>
RunResult<M> run_filter(const M& model, std::size_t m, const RunOptions& options,
                        std::uint64_t seed) {
  Rng rng(seed);
  return run_filter(model, m, options, rng);
}

}  // namespace smcse

#endif  // SMCSE_ENGINE_HPP

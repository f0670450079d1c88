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

#ifndef SMCSE_MODEL_HPP
#define SMCSE_MODEL_HPP

/**
 * \file
 * \brief State-space model interface consumed by the particle engine.
 *
 * A model describes a hidden Markov chain observed through noisy data, a
 * proposal kernel the filter draws from, and a terminal functional whose
 * posterior mean is estimated. Models carry their own per-particle State
 * type: a fixed-size summary when one is sufficient (so long horizons stay
 * cheap), or the realized path when the functional needs it.
 *
 * Stages are numbered t = 1..horizon(). propose(t, prev, rng) draws the
 * stage-t extension given the stage-(t-1) state and returns the new state;
 * log_weight(t, prev, next) returns the log incremental importance weight
 * log(p_t * g_t / q_t) evaluated at that extension. Weights may be -inf
 * (zero weight) but never NaN.
 */

#include <array>
#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "smcse/common.hpp"
#include "smcse/rng.hpp"

namespace smcse {

template <class M>
concept FilterModel = requires(const M& m, const typename M::State& s, Rng& rng) {
  { m.horizon() } -> std::convertible_to<int>;
  { m.functional_dim() } -> std::convertible_to<int>;
  { m.initial_state() } -> std::same_as<typename M::State>;
  { m.propose(1, s, rng) } -> std::same_as<typename M::State>;
  { m.log_weight(1, s, s) } -> std::convertible_to<double>;
  { m.functional(s) } -> std::convertible_to<std::array<double, 2>>;
};

/// Scalar-state model assembled at runtime from density and sampler
/// callables. Particles carry the whole realized path so arbitrary path
/// functionals are supported; this is the flexible (not the fast) path.
class GenericModel {
 public:
  /// Realized path x_{1:t}; empty at stage 0.
  using State = std::vector<double>;

  /// Draws x_t given the path prefix x_{1:t-1} (empty at t = 1).
  using Sampler = std::function<double(int t, std::span<const double> prefix, Rng& rng)>;
  /// Log density of x_t given the path prefix.
  using ConditionalLogPdf = std::function<double(int t, std::span<const double> prefix, double x)>;
  /// Log density of observation y_t given x_t.
  using EmissionLogPdf = std::function<double(int t, double y, double x)>;
  /// Terminal functional of the full path.
  using Functional = std::function<double(std::span<const double> path)>;

  GenericModel(int horizon, Sampler transition_sampler, ConditionalLogPdf transition_logpdf,
               EmissionLogPdf emission_logpdf, Sampler proposal_sampler,
               ConditionalLogPdf proposal_logpdf, std::vector<double> observations,
               Functional functional)
      : horizon_(horizon),
        transition_sampler_(std::move(transition_sampler)),
        transition_logpdf_(std::move(transition_logpdf)),
        emission_logpdf_(std::move(emission_logpdf)),
        proposal_sampler_(std::move(proposal_sampler)),
        proposal_logpdf_(std::move(proposal_logpdf)),
        observations_(std::move(observations)),
        functional_(std::move(functional)) {
    if (horizon_ < 1) {
      throw InvalidConfigError("model horizon must be at least 1");
    }
    if (static_cast<int>(observations_.size()) < horizon_) {
      throw InvalidConfigError("need one observation per stage up to the horizon");
    }
  }

  [[nodiscard]] int horizon() const { return horizon_; }
  [[nodiscard]] int functional_dim() const { return 1; }
  [[nodiscard]] State initial_state() const { return {}; }

  [[nodiscard]] State propose(int t, const State& prev, Rng& rng) const {
    State next = prev;
    next.push_back(proposal_sampler_(t, prev, rng));
    return next;
  }

  /// log p_t(x_t | x_{1:t-1}) + log g_t(y_t | x_t) - log q_t(x_t | x_{1:t-1}).
  [[nodiscard]] double log_weight(int t, const State& prev, const State& next) const {
    const double x = next.back();
    return transition_logpdf_(t, prev, x) + emission_logpdf_(t, observations_[t - 1], x) -
           proposal_logpdf_(t, prev, x);
  }

  [[nodiscard]] std::array<double, 2> functional(const State& path) const {
    return {functional_(path), 0.0};
  }

  /// Forward simulation from the transition kernel (ignores the proposal).
  [[nodiscard]] State simulate_states(Rng& rng) const {
    State path;
    for (int t = 1; t <= horizon_; ++t) {
      path.push_back(transition_sampler_(t, path, rng));
    }
    return path;
  }

  [[nodiscard]] const std::vector<double>& observations() const { return observations_; }

 private:
  int horizon_;
  Sampler transition_sampler_;
  ConditionalLogPdf transition_logpdf_;
  EmissionLogPdf emission_logpdf_;
  Sampler proposal_sampler_;
  ConditionalLogPdf proposal_logpdf_;
  std::vector<double> observations_;
  Functional functional_;
};

static_assert(FilterModel<GenericModel>);

/// Bundles the callables into a ready-to-run model. The incremental weight
/// is always transition + emission - proposal in log space.
inline GenericModel make_generic_model(int horizon, GenericModel::Sampler transition_sampler,
                                       GenericModel::ConditionalLogPdf transition_logpdf,
                                       GenericModel::EmissionLogPdf emission_logpdf,
                                       GenericModel::Sampler proposal_sampler,
                                       GenericModel::ConditionalLogPdf proposal_logpdf,
                                       std::vector<double> observations,
                                       GenericModel::Functional functional) {
  return GenericModel(horizon, std::move(transition_sampler), std::move(transition_logpdf),
                      std::move(emission_logpdf), std::move(proposal_sampler),
                      std::move(proposal_logpdf), std::move(observations), std::move(functional));
}

}  // namespace smcse

#endif  // SMCSE_MODEL_HPP

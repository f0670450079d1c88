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

#ifndef SMCSE_ORACLE_HPP
#define SMCSE_ORACLE_HPP

/**
 * \file
 * \brief Exact reference computations on small finite-state models.
 *
 * Everything here is computed by enumeration or exact recursions in
 * extended precision, never by running the particle filter, so these
 * values can referee the filter and its standard-error estimators:
 *
 *  - ExactEnumerator: posterior functional mean, stage normalizers, the
 *    asymptotic variance of the filter estimate under any resampling
 *    schedule and scheme, and the limiting threshold-triggered schedule;
 *  - exhaustive_prototype_check: enumerates every realization of a tiny
 *    filter (proposals and resampling draws) and returns exact moments of
 *    the estimators together with worst-case identity gaps;
 *  - changepoint_exact_posterior_mean: O(T^2) exact filter mean for the
 *    normal mean-shift model used by the simulation benchmarks.
 *
 * Notation used throughout the file: w_t is the incremental importance
 * weight of stage t, eta_t = E_q[w_1...w_t], h*_t = eta_t / (w_1...w_t),
 * L_T = (w_1...w_T) / eta_T, f_t is the conditional expectation of the
 * centered terminal functional times L_T given the stage-t prefix, and
 * f~_t is its uncentered variant with f~_0 equal to the posterior mean.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smcse/common.hpp"
#include "smcse/model.hpp"
#include "smcse/resampling.hpp"
#include "smcse/rng.hpp"

namespace smcse {

/// Finite-state hidden Markov chain with per-stage tables. Observations are
/// already folded into the emission weights: g[t-1][x] is the likelihood of
/// the stage-t observation when the hidden state is x. The functional is
/// either a value per terminal state or a value per full path.
struct DiscreteHMM {
  enum class FunctionalKind : std::uint8_t { kLastState, kPathTable };

  int d = 0;
  int T = 0;
  std::vector<double> p1;                          ///< initial chain law, size d
  std::vector<double> q1;                          ///< initial proposal, size d
  std::vector<std::vector<std::vector<double>>> p; ///< [t-2][prev][x] for t = 2..T
  std::vector<std::vector<std::vector<double>>> q; ///< same shape as p
  std::vector<std::vector<double>> g;              ///< [t-1][x] for t = 1..T
  FunctionalKind psi_kind = FunctionalKind::kLastState;
  std::vector<double> psi_values;

  [[nodiscard]] std::size_t paths() const {
    std::size_t n = 1;
    for (int t = 0; t < T; ++t) n *= static_cast<std::size_t>(d);
    return n;
  }

  [[nodiscard]] double proposal(int t, int prev, int x) const {
    return t == 1 ? q1[static_cast<std::size_t>(x)]
                  : q[static_cast<std::size_t>(t - 2)][static_cast<std::size_t>(prev)]
                     [static_cast<std::size_t>(x)];
  }

  /// Incremental importance weight p_t * g_t / q_t; prev is ignored at t=1.
  [[nodiscard]] double weight(int t, int prev, int x) const {
    const auto ux = static_cast<std::size_t>(x);
    const double trans = t == 1 ? p1[ux]
                                : p[static_cast<std::size_t>(t - 2)]
                                   [static_cast<std::size_t>(prev)][ux];
    const double emit = g[static_cast<std::size_t>(t - 1)][ux];
    const double prop = proposal(t, prev, x);
    if (trans * emit == 0.0) return 0.0;
    return trans * emit / prop;
  }

  [[nodiscard]] double psi_of_path(std::size_t path_id) const {
    if (psi_kind == FunctionalKind::kLastState) {
      std::size_t stride = 1;
      for (int t = 1; t < T; ++t) stride *= static_cast<std::size_t>(d);
      return psi_values[path_id / stride];
    }
    return psi_values[path_id];
  }

  void validate() const {
    if (d < 2 || T < 1) {
      throw InvalidConfigError("discrete model needs d >= 2 and T >= 1");
    }
    const auto ud = static_cast<std::size_t>(d);
    const auto check_row = [](std::span<const double> row, const std::string& what) {
      double total = 0.0;
      for (double v : row) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw InvalidConfigError(what + ": entries must be finite and nonnegative");
        }
        total += v;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw InvalidConfigError(what + ": row must sum to 1, got " + std::to_string(total));
      }
    };
    if (p1.size() != ud || q1.size() != ud) {
      throw InvalidConfigError("initial law and proposal must have size d");
    }
    check_row(p1, "p1");
    check_row(q1, "q1");
    if (p.size() != static_cast<std::size_t>(T - 1) || q.size() != p.size() ||
        g.size() != static_cast<std::size_t>(T)) {
      throw InvalidConfigError("per-stage table counts do not match the horizon");
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (p[k].size() != ud || q[k].size() != ud) {
        throw InvalidConfigError("transition tables must be d x d");
      }
      for (std::size_t i = 0; i < ud; ++i) {
        if (p[k][i].size() != ud || q[k][i].size() != ud) {
          throw InvalidConfigError("transition tables must be d x d");
        }
        check_row(p[k][i], "p[" + std::to_string(k) + "]");
        check_row(q[k][i], "q[" + std::to_string(k) + "]");
      }
    }
    for (const auto& row : g) {
      if (row.size() != ud) {
        throw InvalidConfigError("emission weights must have size d");
      }
      for (double v : row) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw InvalidConfigError("emission weights must be finite and nonnegative");
        }
      }
    }
    // Proposal support must cover the target support.
    for (int x = 0; x < d; ++x) {
      if (p1[static_cast<std::size_t>(x)] * g[0][static_cast<std::size_t>(x)] > 0.0 &&
          q1[static_cast<std::size_t>(x)] == 0.0) {
        throw InvalidConfigError("initial proposal misses a supported state");
      }
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      for (std::size_t i = 0; i < ud; ++i) {
        for (std::size_t x = 0; x < ud; ++x) {
          if (p[k][i][x] * g[k + 1][x] > 0.0 && q[k][i][x] == 0.0) {
            throw InvalidConfigError("proposal misses a supported transition at stage " +
                                     std::to_string(k + 2));
          }
        }
      }
    }
    const std::size_t want = psi_kind == FunctionalKind::kLastState ? ud : paths();
    if (psi_values.size() != want) {
      throw InvalidConfigError("functional table has the wrong size");
    }
  }
};

/// Engine adapter for DiscreteHMM: packed trivially-copyable state and
/// precomputed proposal tables, so big-population runs stay cheap.
class DiscreteModel {
 public:
  struct State {
    std::int32_t path = 0;
    std::int16_t len = 0;
    std::int16_t last = 0;
  };

  explicit DiscreteModel(DiscreteHMM hmm) : hmm_(std::move(hmm)) {
    hmm_.validate();
    if (hmm_.paths() > (1u << 30)) {
      throw InvalidConfigError("path id would overflow the packed state");
    }
    pow_.resize(static_cast<std::size_t>(hmm_.T) + 1);
    pow_[0] = 1;
    for (int t = 1; t <= hmm_.T; ++t) {
      pow_[static_cast<std::size_t>(t)] =
          pow_[static_cast<std::size_t>(t - 1)] * static_cast<std::size_t>(hmm_.d);
    }
    cdf1_ = cumulative(hmm_.q1);
    const auto ud = static_cast<std::size_t>(hmm_.d);
    cdf_.resize(hmm_.q.size());
    logw_.resize(hmm_.q.size());
    for (std::size_t k = 0; k < hmm_.q.size(); ++k) {
      cdf_[k].resize(ud);
      logw_[k].resize(ud);
      for (std::size_t i = 0; i < ud; ++i) {
        cdf_[k][i] = cumulative(hmm_.q[k][i]);
        logw_[k][i].resize(ud);
        for (std::size_t x = 0; x < ud; ++x) {
          const double w = hmm_.weight(static_cast<int>(k) + 2, static_cast<int>(i),
                                       static_cast<int>(x));
          logw_[k][i][x] = w > 0.0 ? std::log(w) : kNegInf;
        }
      }
    }
    logw1_.resize(ud);
    for (std::size_t x = 0; x < ud; ++x) {
      const double w = hmm_.weight(1, 0, static_cast<int>(x));
      logw1_[x] = w > 0.0 ? std::log(w) : kNegInf;
    }
  }

  [[nodiscard]] int horizon() const { return hmm_.T; }
  [[nodiscard]] int functional_dim() const { return 1; }
  [[nodiscard]] State initial_state() const { return {}; }

  [[nodiscard]] State propose(int t, const State& prev, Rng& rng) const {
    const std::size_t x =
        t == 1 ? rng.categorical(cdf1_)
               : rng.categorical(cdf_[static_cast<std::size_t>(t - 2)]
                                     [static_cast<std::size_t>(prev.last)]);
    State next;
    next.path = prev.path + static_cast<std::int32_t>(x * pow_[static_cast<std::size_t>(t - 1)]);
    next.len = static_cast<std::int16_t>(t);
    next.last = static_cast<std::int16_t>(x);
    return next;
  }

  [[nodiscard]] double log_weight(int t, const State& prev, const State& next) const {
    if (t == 1) return logw1_[static_cast<std::size_t>(next.last)];
    return logw_[static_cast<std::size_t>(t - 2)][static_cast<std::size_t>(prev.last)]
                [static_cast<std::size_t>(next.last)];
  }

  [[nodiscard]] std::array<double, 2> functional(const State& s) const {
    if (hmm_.psi_kind == DiscreteHMM::FunctionalKind::kLastState) {
      return {hmm_.psi_values[static_cast<std::size_t>(s.last)], 0.0};
    }
    return {hmm_.psi_values[static_cast<std::size_t>(s.path)], 0.0};
  }

  [[nodiscard]] const DiscreteHMM& hmm() const { return hmm_; }

 private:
  DiscreteHMM hmm_;
  std::vector<std::size_t> pow_;
  std::vector<double> cdf1_;
  std::vector<std::vector<std::vector<double>>> cdf_;
  std::vector<std::vector<std::vector<double>>> logw_;
  std::vector<double> logw1_;
};

static_assert(FilterModel<DiscreteModel>);

/// Exact path-space tables for a DiscreteHMM, built once by full prefix
/// enumeration in extended precision.
class ExactEnumerator {
 public:
  static constexpr std::size_t kDefaultPrefixBudget = 4u << 20;

  explicit ExactEnumerator(const DiscreteHMM& model,
                           std::size_t prefix_budget = kDefaultPrefixBudget)
      : m_(model) {
    m_.validate();
    pow_.resize(static_cast<std::size_t>(m_.T) + 1);
    pow_[0] = 1;
    std::size_t total_prefixes = 0;
    for (int t = 1; t <= m_.T; ++t) {
      pow_[static_cast<std::size_t>(t)] =
          pow_[static_cast<std::size_t>(t - 1)] * static_cast<std::size_t>(m_.d);
      total_prefixes += pow_[static_cast<std::size_t>(t)];
      if (total_prefixes > prefix_budget) {
        throw EnumerationBudgetError("state space too large for exact enumeration (" +
                                     std::to_string(total_prefixes) + " prefixes)");
      }
    }

    const int T = m_.T;
    const int d = m_.d;
    qprob_.resize(static_cast<std::size_t>(T));
    wprod_.resize(static_cast<std::size_t>(T));
    gamma_prod_.resize(static_cast<std::size_t>(T));
    eta_.assign(static_cast<std::size_t>(T) + 1, 0.0L);
    eta_[0] = 1.0L;
    for (int t = 1; t <= T; ++t) {
      const std::size_t n = pow_[static_cast<std::size_t>(t)];
      auto& qp = qprob_[static_cast<std::size_t>(t - 1)];
      auto& wp = wprod_[static_cast<std::size_t>(t - 1)];
      auto& gp = gamma_prod_[static_cast<std::size_t>(t - 1)];
      qp.resize(n);
      wp.resize(n);
      gp.resize(n);
      NeumaierSumLD eta_acc;
      for (std::size_t id = 0; id < n; ++id) {
        const std::size_t parent = id % pow_[static_cast<std::size_t>(t - 1)];
        const int x = static_cast<int>(id / pow_[static_cast<std::size_t>(t - 1)]);
        const int prev = t == 1 ? 0 : last_state(parent, t - 1);
        const long double qk = m_.proposal(t, prev, x);
        const long double wk = m_.weight(t, prev, x);
        const long double q_pre = t == 1 ? 1.0L : qprob_[static_cast<std::size_t>(t - 2)][parent];
        const long double w_pre = t == 1 ? 1.0L : wprod_[static_cast<std::size_t>(t - 2)][parent];
        const long double g_pre =
            t == 1 ? 1.0L : gamma_prod_[static_cast<std::size_t>(t - 2)][parent];
        qp[id] = q_pre * qk;
        wp[id] = w_pre * wk;
        gp[id] = g_pre * (wk + wk * wk);
        eta_acc.add(qp[id] * wp[id]);
      }
      eta_[static_cast<std::size_t>(t)] = eta_acc.value();
    }
    if (!(eta_[static_cast<std::size_t>(T)] > 0.0L)) {
      throw InconsistentObservationsError(
          "observations have zero likelihood under the proposal support");
    }

    // Forward sum-product normalizers as an independent route to eta.
    eta_forward_.assign(static_cast<std::size_t>(T) + 1, 0.0L);
    eta_forward_[0] = 1.0L;
    std::vector<long double> alpha(static_cast<std::size_t>(d));
    for (int x = 0; x < d; ++x) {
      alpha[static_cast<std::size_t>(x)] =
          static_cast<long double>(m_.p1[static_cast<std::size_t>(x)]) *
          m_.g[0][static_cast<std::size_t>(x)];
    }
    eta_forward_[1] = sum_of(alpha);
    for (int t = 2; t <= T; ++t) {
      std::vector<long double> next(static_cast<std::size_t>(d), 0.0L);
      for (int x = 0; x < d; ++x) {
        NeumaierSumLD acc;
        for (int prev = 0; prev < d; ++prev) {
          acc.add(alpha[static_cast<std::size_t>(prev)] *
                  m_.p[static_cast<std::size_t>(t - 2)][static_cast<std::size_t>(prev)]
                      [static_cast<std::size_t>(x)] *
                  m_.g[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(x)]);
        }
        next[static_cast<std::size_t>(x)] = acc.value();
      }
      alpha = std::move(next);
      eta_forward_[static_cast<std::size_t>(t)] = sum_of(alpha);
    }

    // Posterior mean of the functional.
    {
      NeumaierSumLD acc;
      const auto& qp = qprob_.back();
      const auto& wp = wprod_.back();
      for (std::size_t id = 0; id < qp.size(); ++id) {
        acc.add(qp[id] * wp[id] * static_cast<long double>(m_.psi_of_path(id)));
      }
      psi_T_ = acc.value() / eta_[static_cast<std::size_t>(T)];
    }

    // Backward conditional-expectation tables, centered and uncentered.
    f_.resize(static_cast<std::size_t>(T));
    ft_.resize(static_cast<std::size_t>(T));
    {
      const std::size_t n = pow_[static_cast<std::size_t>(T)];
      auto& fb = f_[static_cast<std::size_t>(T - 1)];
      auto& ftb = ft_[static_cast<std::size_t>(T - 1)];
      fb.resize(n);
      ftb.resize(n);
      for (std::size_t id = 0; id < n; ++id) {
        const long double lt = wprod_.back()[id] / eta_[static_cast<std::size_t>(T)];
        const long double value = static_cast<long double>(m_.psi_of_path(id));
        fb[id] = (value - psi_T_) * lt;
        ftb[id] = value * lt;
      }
    }
    for (int t = T - 1; t >= 1; --t) {
      const std::size_t n = pow_[static_cast<std::size_t>(t)];
      auto& fb = f_[static_cast<std::size_t>(t - 1)];
      auto& ftb = ft_[static_cast<std::size_t>(t - 1)];
      fb.assign(n, 0.0L);
      ftb.assign(n, 0.0L);
      for (std::size_t id = 0; id < n; ++id) {
        const int prev = last_state(id, t);
        NeumaierSumLD acc_f;
        NeumaierSumLD acc_ft;
        for (int x = 0; x < d; ++x) {
          const std::size_t child =
              id + static_cast<std::size_t>(x) * pow_[static_cast<std::size_t>(t)];
          const long double qk = m_.proposal(t + 1, prev, x);
          acc_f.add(qk * f_[static_cast<std::size_t>(t)][child]);
          acc_ft.add(qk * ft_[static_cast<std::size_t>(t)][child]);
        }
        fb[id] = acc_f.value();
        ftb[id] = acc_ft.value();
      }
    }
  }

  [[nodiscard]] const DiscreteHMM& model() const { return m_; }
  [[nodiscard]] double psi_T() const { return static_cast<double>(psi_T_); }
  [[nodiscard]] double eta(int t) const {
    return static_cast<double>(eta_[static_cast<std::size_t>(t)]);
  }
  [[nodiscard]] double eta_forward(int t) const {
    return static_cast<double>(eta_forward_[static_cast<std::size_t>(t)]);
  }

  /// f_t at a prefix id of length t; t = 0 gives 0.
  [[nodiscard]] double f(int t, std::size_t prefix) const {
    return t == 0 ? 0.0 : static_cast<double>(f_[static_cast<std::size_t>(t - 1)][prefix]);
  }
  /// Uncentered f~_t; t = 0 gives the posterior mean.
  [[nodiscard]] double f_tilde(int t, std::size_t prefix) const {
    return t == 0 ? psi_T()
                  : static_cast<double>(ft_[static_cast<std::size_t>(t - 1)][prefix]);
  }
  /// h*_t at a prefix id of length t; t = 0 gives 1. Infinite when the
  /// prefix has zero weight product.
  [[nodiscard]] double h_star(int t, std::size_t prefix) const {
    if (t == 0) return 1.0;
    const long double w = wprod_[static_cast<std::size_t>(t - 1)][prefix];
    return static_cast<double>(eta_[static_cast<std::size_t>(t)] / w);
  }
  /// E_q of the product of (w_k + w_k^2); finite exactly when the terminal
  /// weight has a finite second moment under the proposal.
  [[nodiscard]] double e_gamma_T() const {
    NeumaierSumLD acc;
    const auto& qp = qprob_.back();
    for (std::size_t id = 0; id < qp.size(); ++id) {
      acc.add(qp[id] * gamma_prod_.back()[id]);
    }
    return static_cast<double>(acc.value());
  }

  struct Sigma2Result {
    double total = 0.0;
    std::vector<double> terms;  ///< per-stage martingale variance increments
  };

  /// Asymptotic variance of the sqrt(m)-scaled estimation error for the
  /// filter resampling exactly at the stages in schedule (sorted, within
  /// 1..T-1; empty = pure importance sampling; 1..T-1 = every stage).
  /// terms alternate between the sampling increment of each block and the
  /// resampling increment at each schedule stage.
  [[nodiscard]] Sigma2Result sigma2(const std::vector<int>& schedule, Scheme scheme) const {
    validate_schedule(schedule);
    std::vector<int> ends(schedule);
    ends.push_back(m_.T);
    Sigma2Result out;
    int a = 0;
    int k = 0;
    NeumaierSumLD total;
    for (std::size_t s = 0; s < ends.size(); ++s) {
      const int b = ends[s];
      // Sampling increment of block (a, b]:
      //   E_q[f_b^2 h*_a] - E_q[f_a^2 h*_a].
      const long double upper = expect_f2_hstar(b, a, /*tilde=*/false);
      const long double lower = expect_f2_hstar(a, a, /*tilde=*/false);
      push_term(out, total, static_cast<double>(upper - lower), ++k);
      if (b < m_.T) {
        // Resampling increment at stage b.
        long double even = 0.0L;
        if (scheme == Scheme::kMultinomial) {
          even = expect_f2_hstar(b, b, /*tilde=*/false);
        } else {
          even = expect_residual_term(a, b);
        }
        push_term(out, total, static_cast<double>(even), ++k);
      }
      a = b;
    }
    out.total = static_cast<double>(total.value());
    return out;
  }

  /// Asymptotic variance of the sqrt(m)-scaled error of the unbiased
  /// prototype estimator under resampling at every stage: the same block
  /// structure with uncentered f~ and resampling increments
  /// E_q[(f~_t h*_t - psi_T)^2 / h*_t].
  [[nodiscard]] Sigma2Result prototype_sigma2() const {
    Sigma2Result out;
    NeumaierSumLD total;
    int k = 0;
    for (int t = 1; t <= m_.T; ++t) {
      const long double upper = expect_f2_hstar(t, t - 1, /*tilde=*/true);
      const long double lower =
          t == 1 ? static_cast<long double>(psi_T_) * psi_T_
                 : expect_f2_hstar(t - 1, t - 1, /*tilde=*/true);
      push_term(out, total, static_cast<double>(upper - lower), ++k);
      if (t < m_.T) {
        NeumaierSumLD acc;
        const auto& qp = qprob_[static_cast<std::size_t>(t - 1)];
        for (std::size_t id = 0; id < qp.size(); ++id) {
          const long double hs = eta_[static_cast<std::size_t>(t)] /
                                 wprod_[static_cast<std::size_t>(t - 1)][id];
          const long double dev = ft_[static_cast<std::size_t>(t - 1)][id] * hs - psi_T_;
          acc.add(qp[id] * dev * dev / hs);
        }
        push_term(out, total, static_cast<double>(acc.value()), ++k);
      }
    }
    out.total = static_cast<double>(total.value());
    return out;
  }

  /// Population limit of the squared weight coefficient of variation at
  /// stage t for a block that started after stage tau_prev:
  ///   E_q[ (w*_{tau_prev+1} ... w*_t)^2 / h*_{tau_prev} ] - 1.
  [[nodiscard]] double block_cv_limit(int tau_prev, int t) const {
    const auto& qp = qprob_[static_cast<std::size_t>(t - 1)];
    const auto& wp = wprod_[static_cast<std::size_t>(t - 1)];
    const long double eta_a = eta_[static_cast<std::size_t>(tau_prev)];
    const long double eta_t = eta_[static_cast<std::size_t>(t)];
    NeumaierSumLD acc;
    for (std::size_t id = 0; id < qp.size(); ++id) {
      const long double w_a =
          tau_prev == 0
              ? 1.0L
              : wprod_[static_cast<std::size_t>(tau_prev - 1)]
                      [id % pow_[static_cast<std::size_t>(tau_prev)]];
      if (w_a == 0.0L) {
        if (qp[id] * wp[id] != 0.0L) {
          throw NonFiniteMomentError("block cv limit is infinite at stage " + std::to_string(t),
                                     t);
        }
        continue;
      }
      acc.add(qp[id] * (eta_a / (eta_t * eta_t)) * (wp[id] * wp[id] / w_a));
    }
    return static_cast<double>(acc.value() - 1.0L);
  }

  /// Limiting resampling schedule of the cv^2 >= c trigger. Throws
  /// AmbiguousScheduleError when any examined stage lands within margin of
  /// the threshold, since the realized schedule would then be a coin flip.
  [[nodiscard]] std::vector<int> tau_star(double c, double margin = 1e-9) const {
    if (!(c >= 0.0)) {
      throw InvalidConfigError("tau_star: threshold must be nonnegative");
    }
    std::vector<int> schedule;
    int prev = 0;
    for (int t = 1; t <= m_.T - 1; ++t) {
      const double value = block_cv_limit(prev, t);
      if (std::abs(value - c) <= margin) {
        throw AmbiguousScheduleError("limit cv^2 at stage " + std::to_string(t) +
                                     " is within margin of the threshold: " +
                                     std::to_string(value));
      }
      if (value >= c) {
        schedule.push_back(t);
        prev = t;
      }
    }
    return schedule;
  }

 private:
  [[nodiscard]] int last_state(std::size_t prefix_id, int len) const {
    return static_cast<int>(prefix_id / pow_[static_cast<std::size_t>(len - 1)]);
  }

  static long double sum_of(const std::vector<long double>& xs) {
    NeumaierSumLD acc;
    for (long double x : xs) acc.add(x);
    return acc.value();
  }

  void validate_schedule(const std::vector<int>& schedule) const {
    int prev = 0;
    for (int t : schedule) {
      if (t <= prev || t >= m_.T) {
        throw InvalidConfigError("resampling schedule must be increasing and within 1..T-1");
      }
      prev = t;
    }
  }

  void push_term(Sigma2Result& out, NeumaierSumLD& total, double term, int k) const {
    if (!std::isfinite(term)) {
      throw NonFiniteMomentError("variance term " + std::to_string(k) + " is not finite", k);
    }
    out.terms.push_back(term);
    total.add(term);
  }

  /// E_q[f_b^2(X_b) h*_a(X_a)] with a <= b (tilde switches to f~).
  [[nodiscard]] long double expect_f2_hstar(int b, int a, bool tilde) const {
    if (b == 0) {
      const long double f0 = tilde ? static_cast<long double>(psi_T_) : 0.0L;
      return f0 * f0;
    }
    const auto& table = tilde ? ft_[static_cast<std::size_t>(b - 1)]
                              : f_[static_cast<std::size_t>(b - 1)];
    const auto& qp = qprob_[static_cast<std::size_t>(b - 1)];
    NeumaierSumLD acc;
    for (std::size_t id = 0; id < qp.size(); ++id) {
      long double hs = 1.0L;
      if (a > 0) {
        const std::size_t parent = id % pow_[static_cast<std::size_t>(a)];
        const long double w_a = wprod_[static_cast<std::size_t>(a - 1)][parent];
        if (w_a == 0.0L) {
          if (qp[id] * table[id] != 0.0L) {
            throw NonFiniteMomentError("infinite importance correction inside a variance term",
                                       a);
          }
          continue;
        }
        hs = eta_[static_cast<std::size_t>(a)] / w_a;
      }
      acc.add(qp[id] * table[id] * table[id] * hs);
    }
    return acc.value();
  }

  /// E_q[gamma(w*-product over block (a, b]) f_b^2 h*_b].
  [[nodiscard]] long double expect_residual_term(int a, int b) const {
    const auto& qp = qprob_[static_cast<std::size_t>(b - 1)];
    const auto& wp = wprod_[static_cast<std::size_t>(b - 1)];
    const long double ratio = eta_[static_cast<std::size_t>(a)] / eta_[static_cast<std::size_t>(b)];
    NeumaierSumLD acc;
    for (std::size_t id = 0; id < qp.size(); ++id) {
      const long double w_a =
          a == 0 ? 1.0L
                 : wprod_[static_cast<std::size_t>(a - 1)][id % pow_[static_cast<std::size_t>(a)]];
      if (wp[id] == 0.0L) continue;  // f and the block weight both vanish
      const long double block_wstar = ratio * wp[id] / w_a;
      const long double frac = block_wstar - std::floor(block_wstar);
      const long double gamma_v = frac * (1.0L - frac) / block_wstar;
      const long double hs = eta_[static_cast<std::size_t>(b)] / wp[id];
      const long double fb = f_[static_cast<std::size_t>(b - 1)][id];
      acc.add(qp[id] * gamma_v * fb * fb * hs);
    }
    return acc.value();
  }

  DiscreteHMM m_;
  std::vector<std::size_t> pow_;
  std::vector<std::vector<long double>> qprob_;
  std::vector<std::vector<long double>> wprod_;
  std::vector<std::vector<long double>> gamma_prod_;
  std::vector<std::vector<long double>> f_;
  std::vector<std::vector<long double>> ft_;
  std::vector<long double> eta_;
  std::vector<long double> eta_forward_;
  long double psi_T_ = 0.0L;
};

/// Shorthand for the values most callers want from the enumerator.
struct ExactPosterior {
  double psi_T = 0.0;
  std::vector<double> eta;          ///< eta_0..eta_T by path enumeration
  std::vector<double> eta_forward;  ///< same values by the forward recursion
};

inline ExactPosterior exact_posterior(const DiscreteHMM& model) {
  const ExactEnumerator e(model);
  ExactPosterior out;
  out.psi_T = e.psi_T();
  for (int t = 0; t <= model.T; ++t) {
    out.eta.push_back(e.eta(t));
    out.eta_forward.push_back(e.eta_forward(t));
  }
  return out;
}

/// Exact moments and identity gaps of a complete enumeration of the filter
/// on a tiny instance (horizon at most 2): every proposal tuple, every
/// resampling outcome, and every second-stage proposal tuple is visited
/// with its probability.
struct PrototypeCheckResult {
  double e_prototype = 0.0;        ///< exact mean of the unbiased prototype
  double var_prototype = 0.0;      ///< exact variance of the prototype
  double e_ratio = 0.0;            ///< exact mean of the weighted-mean estimator
  double prob_mass = 0.0;          ///< accumulated atom probability (must be 1)
  double max_weight_identity_gap = 0.0;  ///< worst |M W - H/H~| over atoms
  double max_var_identity_gap = 0.0;     ///< worst gap of the variance identity
  double max_martingale_gap = 0.0;       ///< worst conditional mean of an increment
};

inline PrototypeCheckResult exhaustive_prototype_check(const DiscreteHMM& model, std::size_t m,
                                                       Scheme scheme,
                                                       std::size_t atom_budget = 2'000'000) {
  model.validate();
  if (model.T > 2) {
    throw InvalidConfigError("exhaustive check supports horizons 1 and 2");
  }
  if (m < 1) {
    throw InvalidConfigError("exhaustive check needs at least one particle");
  }
  const auto d = static_cast<std::size_t>(model.d);
  // Strictly positive weights keep every H and W finite so the identity
  // checks below are well defined atom by atom.
  for (int x = 0; x < model.d; ++x) {
    if (model.weight(1, 0, x) <= 0.0) {
      throw ContractViolationError("exhaustive check needs strictly positive weights");
    }
    if (model.T == 2) {
      for (int prev = 0; prev < model.d; ++prev) {
        if (model.weight(2, prev, x) <= 0.0) {
          throw ContractViolationError("exhaustive check needs strictly positive weights");
        }
      }
    }
  }
  {
    // Atom budget: proposal tuples x resampling outcomes x second-stage
    // proposal tuples (population can grow by at most m under the
    // residual-Bernoulli scheme).
    long double atoms = std::pow(static_cast<long double>(d), static_cast<long double>(m));
    if (model.T == 2) {
      const long double resample_atoms =
          scheme == Scheme::kMultinomial
              ? std::pow(static_cast<long double>(m), static_cast<long double>(m))
              : std::pow(2.0L, static_cast<long double>(m));
      const long double grown = std::pow(static_cast<long double>(d),
                                         static_cast<long double>(2 * m));
      atoms *= resample_atoms * grown;
    }
    if (atoms > static_cast<long double>(atom_budget)) {
      throw EnumerationBudgetError("exhaustive check would visit too many atoms");
    }
  }

  const ExactEnumerator oracle(model);
  const long double psi_T = oracle.psi_T();
  const long double eta_T = oracle.eta(model.T);

  PrototypeCheckResult out;
  NeumaierSumLD mass;
  NeumaierSumLD e1;   // E[prototype]
  NeumaierSumLD e2;   // E[prototype^2]
  NeumaierSumLD er;   // E[ratio estimator]

  // Digit odometers enumerate proposal tuples and resampling outcomes.
  const auto advance = [](std::vector<std::size_t>& digits, std::size_t base) {
    for (auto& digit : digits) {
      if (++digit < base) return true;
      digit = 0;
    }
    return false;
  };

  const long double mu_probe = 0.37;  // second centering for the variance identity

  // Unconditional means of the stage-1 sampling increments, one per origin.
  std::vector<NeumaierSumLD> cond_e1(m);

  std::vector<std::size_t> x1(m, 0);
  do {
    // Stage 1: proposal probabilities and weights.
    long double p_x1 = 1.0L;
    std::vector<long double> w1(m);
    for (std::size_t i = 0; i < m; ++i) {
      p_x1 *= oracle.model().proposal(1, 0, static_cast<int>(x1[i]));
      w1[i] = oracle.model().weight(1, 0, static_cast<int>(x1[i]));
    }
    if (p_x1 == 0.0L) continue;
    long double w1_sum = 0.0L;
    for (std::size_t i = 0; i < m; ++i) w1_sum += w1[i];
    const long double w1_bar = w1_sum / static_cast<long double>(m);
    for (std::size_t j = 0; j < m; ++j) {
      cond_e1[j].add(p_x1 * (static_cast<long double>(oracle.f_tilde(1, x1[j])) - psi_T));
    }

    if (model.T == 1) {
      // No resampling: both estimators are deterministic given the tuple.
      long double proto = 0.0L;
      long double num = 0.0L;
      for (std::size_t i = 0; i < m; ++i) {
        const long double value = oracle.model().psi_of_path(x1[i]);
        proto += (w1[i] / eta_T) * value;
        num += w1[i] * value;
      }
      proto /= static_cast<long double>(m);
      const long double ratio = num / w1_sum;
      mass.add(p_x1);
      e1.add(p_x1 * proto);
      e2.add(p_x1 * proto * proto);
      er.add(p_x1 * ratio);
      // Variance identity without resampling: centered group sums equal
      // the single increment f~_1 - psi_T per particle.
      for (std::size_t j = 0; j < m; ++j) {
        const long double term = (w1[j] / eta_T) * oracle.model().psi_of_path(x1[j]);
        const long double eps = oracle.f_tilde(1, x1[j]) - psi_T;
        const long double gap = std::abs((term - psi_T) - eps);
        out.max_var_identity_gap =
            std::max(out.max_var_identity_gap, static_cast<double>(gap));
      }
      continue;
    }

    // Stage 1 resampling weights and importance corrections.
    std::vector<long double> bigW(m);
    std::vector<long double> h1_tilde(m);
    for (std::size_t i = 0; i < m; ++i) {
      bigW[i] = w1[i] / w1_sum;
      h1_tilde[i] = w1_bar / w1[i];
      const long double lhs = static_cast<long double>(m) * bigW[i];
      const long double rhs = 1.0L / h1_tilde[i];  // H_0 / H~_1
      out.max_weight_identity_gap = std::max(
          out.max_weight_identity_gap, static_cast<double>(std::abs(lhs - rhs)));
    }

    // Conditional mean of the stage-1 sampling increments over x1 atoms is
    // checked at the very end via the accumulated unconditional means.

    const std::size_t n_outcomes = scheme == Scheme::kMultinomial ? m : 2;
    std::vector<std::size_t> outcome(m, 0);
    std::vector<NeumaierSumLD> cond_e2(m);  // E[resampling increment | x1]
    do {
      long double p_res = 1.0L;
      std::vector<std::int64_t> counts(m, 0);
      if (scheme == Scheme::kMultinomial) {
        for (std::size_t j = 0; j < m; ++j) {
          p_res *= bigW[outcome[j]];
          ++counts[outcome[j]];
        }
      } else {
        for (std::size_t i = 0; i < m; ++i) {
          const long double target = static_cast<long double>(m) * bigW[i];
          const long double frac = target - std::floor(target);
          const long double p_extra = outcome[i] == 1 ? frac : 1.0L - frac;
          p_res *= p_extra;
          counts[i] = static_cast<std::int64_t>(std::floor(target)) +
                      static_cast<std::int64_t>(outcome[i]);
        }
      }
      if (p_res == 0.0L) continue;

      std::vector<std::size_t> parents;
      if (scheme == Scheme::kMultinomial) {
        parents.assign(outcome.begin(), outcome.end());
      } else {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::int64_t k = 0; k < counts[i]; ++k) parents.push_back(i);
        }
      }
      const std::size_t m2 = parents.size();

      // Resampling increments per origin.
      std::vector<long double> eps2(m);
      for (std::size_t j = 0; j < m; ++j) {
        const long double dev =
            oracle.f_tilde(1, x1[j]) * h1_tilde[j] - psi_T;
        eps2[j] = (static_cast<long double>(counts[j]) -
                   static_cast<long double>(m) * bigW[j]) *
                  dev;
        cond_e2[j].add(p_res * eps2[j]);
      }
      if (m2 == 0) {
        // Unreachable with strictly positive weights: multinomial always
        // draws m parents, and residual targets summing to m cannot all
        // have zero floor and zero Bernoulli mass.
        throw ContractViolationError("resampling produced an empty population");
      }

      std::vector<std::size_t> x2(m2, 0);
      std::vector<NeumaierSumLD> cond_e3(m);
      do {
        long double p_x2 = 1.0L;
        std::vector<long double> w2(m2);
        std::vector<std::size_t> path(m2);
        for (std::size_t j = 0; j < m2; ++j) {
          const int prev = static_cast<int>(x1[parents[j]]);
          p_x2 *= oracle.model().proposal(2, prev, static_cast<int>(x2[j]));
          w2[j] = oracle.model().weight(2, prev, static_cast<int>(x2[j]));
          path[j] = x1[parents[j]] + x2[j] * d;
        }
        if (p_x2 == 0.0L) continue;
        const long double p_atom = p_x1 * p_res * p_x2;

        long double w2_sum = 0.0L;
        for (std::size_t j = 0; j < m2; ++j) w2_sum += w2[j];

        // Prototype and ratio estimators on this atom.
        long double proto = 0.0L;
        long double num = 0.0L;
        std::vector<long double> group_core(m, 0.0L);
        std::vector<long double> eps3(m, 0.0L);
        for (std::size_t j = 0; j < m2; ++j) {
          const long double lt = w1[parents[j]] * w2[j] / eta_T;
          const long double value = oracle.model().psi_of_path(path[j]);
          const long double h1 = h1_tilde[parents[j]];
          proto += lt * value * h1;
          num += w2[j] * value;
          group_core[parents[j]] += lt * value * h1;
          eps3[parents[j]] +=
              (oracle.f_tilde(2, path[j]) - oracle.f_tilde(1, x1[parents[j]])) * h1;
        }
        proto /= static_cast<long double>(m);
        const long double ratio = num / w2_sum;

        mass.add(p_atom);
        e1.add(p_atom * proto);
        e2.add(p_atom * proto * proto);
        er.add(p_atom * ratio);

        for (std::size_t j = 0; j < m; ++j) cond_e3[j].add(p_x2 * eps3[j]);

        // Variance identity on this atom, at two centerings: the grouped
        // estimator form must match the summed increments exactly.
        for (const long double mu : {psi_T, mu_probe}) {
          for (std::size_t j = 0; j < m; ++j) {
            const long double correction =
                1.0L + (static_cast<long double>(counts[j]) -
                        static_cast<long double>(m) * bigW[j]);
            const long double grouped = group_core[j] - correction * mu;
            const long double eps1 = oracle.f_tilde(1, x1[j]) - psi_T;
            const long double summed = eps1 + eps2[j] + eps3[j] - (mu - psi_T);
            // eps-decomposition of the grouped sum: subtracting mu instead
            // of psi_T shifts each group by (mu - psi_T) times the
            // correction; the correction multiplies mu in `grouped` and
            // appears split between eps2 (count deviation) and the shift.
            const long double shifted =
                summed - (mu - psi_T) * (correction - 1.0L);
            const long double gap = std::abs(grouped - shifted);
            out.max_var_identity_gap =
                std::max(out.max_var_identity_gap, static_cast<double>(gap));
          }
        }
      } while (advance(x2, d));

      for (std::size_t j = 0; j < m; ++j) {
        out.max_martingale_gap = std::max(
            out.max_martingale_gap, static_cast<double>(std::abs(cond_e3[j].value())));
      }
    } while (advance(outcome, n_outcomes));

    for (std::size_t j = 0; j < m; ++j) {
      out.max_martingale_gap = std::max(
          out.max_martingale_gap, static_cast<double>(std::abs(cond_e2[j].value())));
    }
  } while (advance(x1, d));

  for (std::size_t j = 0; j < m; ++j) {
    out.max_martingale_gap = std::max(
        out.max_martingale_gap, static_cast<double>(std::abs(cond_e1[j].value())));
  }

  out.prob_mass = static_cast<double>(mass.value());
  out.e_prototype = static_cast<double>(e1.value());
  out.var_prototype = static_cast<double>(e2.value() - e1.value() * e1.value());
  out.e_ratio = static_cast<double>(er.value());
  return out;
}

/// Exact posterior means E[X_t | Y_1..Y_t] for the normal mean-shift model:
/// the level restarts from N(0, xi) with probability rho at each stage (and
/// surely at t = 1) and is observed with standard normal noise. Runs the
/// run-length recursion in log space, O(T^2) total.
inline std::vector<double> changepoint_exact_posterior_mean(std::span<const double> y, double rho,
                                                            double xi) {
  if (y.empty()) {
    throw InvalidConfigError("need at least one observation");
  }
  if (!(rho > 0.0) || !(rho < 1.0) || !(xi > 0.0)) {
    throw InvalidConfigError("need 0 < rho < 1 and xi > 0");
  }
  const std::size_t horizon = y.size();
  std::vector<double> prefix(horizon + 1, 0.0);
  for (std::size_t t = 0; t < horizon; ++t) prefix[t + 1] = prefix[t] + y[t];

  // lambda and mu of the segment starting at c (1-based) at time t.
  const auto seg_lambda = [xi](std::size_t t, std::size_t c) {
    return 1.0 / (static_cast<double>(t - c + 1) + 1.0 / xi);
  };
  const auto seg_mu = [&](std::size_t t, std::size_t c) {
    return seg_lambda(t, c) * (prefix[t] - prefix[c - 1]);
  };

  std::vector<double> logpi = {0.0};  // P(C_1 = 1 | Y_1) = 1
  std::vector<double> means;
  means.push_back(seg_mu(1, 1));
  for (std::size_t t = 2; t <= horizon; ++t) {
    std::vector<double> next(t);
    const double obs = y[t - 1];
    for (std::size_t c = 1; c < t; ++c) {
      const double pred =
          normal_logpdf(obs, seg_mu(t - 1, c), 1.0 + seg_lambda(t - 1, c));
      next[c - 1] = logpi[c - 1] + std::log1p(-rho) + pred;
    }
    next[t - 1] = std::log(rho) + normal_logpdf(obs, 0.0, 1.0 + xi);
    const double norm = logsumexp(next);
    for (double& v : next) v -= norm;
    logpi = std::move(next);

    NeumaierSum mean_acc;
    for (std::size_t c = 1; c <= t; ++c) {
      mean_acc.add(std::exp(logpi[c - 1]) * seg_mu(t, c));
    }
    means.push_back(mean_acc.value());
  }
  return means;
}

}  // namespace smcse

#endif  // SMCSE_ORACLE_HPP

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

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "smcse/oracle.hpp"

namespace smcse {
namespace {

DiscreteHMM small_hmm(int horizon) {
  DiscreteHMM hmm;
  hmm.d = 2;
  hmm.T = horizon;
  hmm.p1 = {0.6, 0.4};
  hmm.q1 = {0.5, 0.5};
  const std::vector<std::vector<double>> trans = {{0.7, 0.3}, {0.4, 0.6}};
  const std::vector<std::vector<double>> prop = {{0.55, 0.45}, {0.35, 0.65}};
  const std::vector<std::vector<double>> emits = {
      {0.9, 0.3}, {0.4, 0.8}, {0.7, 0.5}, {0.2, 0.9}, {0.6, 0.6}};
  for (int t = 2; t <= horizon; ++t) {
    hmm.p.push_back(trans);
    hmm.q.push_back(prop);
  }
  for (int t = 1; t <= horizon; ++t) {
    hmm.g.push_back(emits[static_cast<std::size_t>((t - 1) % 5)]);
  }
  hmm.psi_kind = DiscreteHMM::FunctionalKind::kLastState;
  hmm.psi_values = {1.0, -1.0};
  return hmm;
}

// Decodes prefix id digits (little-endian base d) and returns the raw
// q-probability and weight product, straight from the model tables.
struct PathView {
  std::vector<int> states;
  double qprob = 1.0;
  double wprod = 1.0;
};

PathView decode(const DiscreteHMM& hmm, std::size_t id, int len) {
  PathView view;
  std::size_t rest = id;
  for (int t = 1; t <= len; ++t) {
    const int x = static_cast<int>(rest % static_cast<std::size_t>(hmm.d));
    rest /= static_cast<std::size_t>(hmm.d);
    const int prev = t == 1 ? 0 : view.states.back();
    view.qprob *= hmm.proposal(t, prev, x);
    view.wprod *= hmm.weight(t, prev, x);
    view.states.push_back(x);
  }
  return view;
}

std::size_t npaths(const DiscreteHMM& hmm, int len) {
  std::size_t n = 1;
  for (int t = 0; t < len; ++t) n *= static_cast<std::size_t>(hmm.d);
  return n;
}

TEST_CASE("path-sum and forward-recursion normalizers agree") {
  const ExactEnumerator e(small_hmm(5));
  for (int t = 0; t <= 5; ++t) {
    CHECK_THAT(e.eta(t), Catch::Matchers::WithinRel(e.eta_forward(t), 1e-13));
  }
}

TEST_CASE("normalizers and posterior mean match hand-computed values") {
  // d = 2, T = 2, flat proposal. alpha_1 = (0.54, 0.12), eta_1 = 0.66;
  // alpha_2 = (0.1704, 0.1872), eta_2 = 0.3576; psi in (1, -1) gives
  // psi_T = -0.0168 / 0.3576 = -7/149.
  DiscreteHMM hmm = small_hmm(2);
  hmm.q1 = {0.5, 0.5};
  hmm.q = {{{0.5, 0.5}, {0.5, 0.5}}};
  const ExactEnumerator e(hmm);
  CHECK_THAT(e.eta(0), Catch::Matchers::WithinAbs(1.0, 1e-15));
  CHECK_THAT(e.eta(1), Catch::Matchers::WithinAbs(0.66, 1e-14));
  CHECK_THAT(e.eta(2), Catch::Matchers::WithinAbs(0.3576, 1e-14));
  CHECK_THAT(e.psi_T(), Catch::Matchers::WithinAbs(-7.0 / 149.0, 1e-14));
}

TEST_CASE("conditional-expectation tables match their path-space definition") {
  const DiscreteHMM hmm = small_hmm(3);
  const ExactEnumerator e(hmm);
  const int T = hmm.T;
  const std::size_t full = npaths(hmm, T);

  for (int t = 0; t <= T; ++t) {
    const std::size_t prefixes = npaths(hmm, t);
    for (std::size_t id = 0; id < prefixes; ++id) {
      // f_t(prefix) sums (psi - psi_T) L_T over all continuations weighted
      // by their conditional proposal probability.
      double f_direct = 0.0;
      double ft_direct = 0.0;
      const PathView me = decode(hmm, id, t);
      for (std::size_t path = 0; path < full; ++path) {
        if (path % prefixes != id) continue;
        const PathView pv = decode(hmm, path, T);
        const double cond_q = pv.qprob / me.qprob;
        const double lt = pv.wprod / e.eta(T);
        f_direct += cond_q * (hmm.psi_of_path(path) - e.psi_T()) * lt;
        ft_direct += cond_q * hmm.psi_of_path(path) * lt;
      }
      CHECK_THAT(e.f(t, id), Catch::Matchers::WithinAbs(f_direct, 1e-13));
      CHECK_THAT(e.f_tilde(t, id), Catch::Matchers::WithinAbs(ft_direct, 1e-13));
      if (t > 0) {
        CHECK_THAT(e.h_star(t, id),
                   Catch::Matchers::WithinAbs(e.eta(t) / me.wprod, 1e-12));
      }
    }
  }
  CHECK(e.f(0, 0) == 0.0);
  CHECK(e.f_tilde(0, 0) == e.psi_T());
  CHECK(e.h_star(0, 0) == 1.0);
}

TEST_CASE("an empty schedule reproduces the importance-sampling variance") {
  const DiscreteHMM hmm = small_hmm(4);
  const ExactEnumerator e(hmm);
  const int T = hmm.T;
  double direct = 0.0;
  for (std::size_t path = 0; path < npaths(hmm, T); ++path) {
    const PathView pv = decode(hmm, path, T);
    const double dev = (hmm.psi_of_path(path) - e.psi_T()) * pv.wprod / e.eta(T);
    direct += pv.qprob * dev * dev;
  }
  const auto result = e.sigma2({}, Scheme::kMultinomial);
  REQUIRE(result.terms.size() == 1);
  CHECK_THAT(result.total, Catch::Matchers::WithinRel(direct, 1e-12));
  // The scheme is irrelevant without resampling stages.
  CHECK(e.sigma2({}, Scheme::kResidualBernoulli).total == result.total);
}

TEST_CASE("variance terms split into blocks that sum to the total") {
  const ExactEnumerator e(small_hmm(4));
  const std::vector<int> schedule = {1, 2};
  for (Scheme scheme : {Scheme::kMultinomial, Scheme::kResidualBernoulli}) {
    const auto result = e.sigma2(schedule, scheme);
    // blocks (0,1], @1, (1,2], @2, (2,4]
    REQUIRE(result.terms.size() == 5);
    double acc = 0.0;
    for (double term : result.terms) acc += term;
    CHECK_THAT(result.total, Catch::Matchers::WithinAbs(acc, 1e-15));
  }
}

TEST_CASE("residual-Bernoulli never beats multinomial by more than gamma") {
  const ExactEnumerator e(small_hmm(5));
  const std::vector<std::vector<int>> schedules = {{1}, {2}, {1, 3}, {1, 2, 3, 4}};
  for (const auto& schedule : schedules) {
    const auto multi = e.sigma2(schedule, Scheme::kMultinomial);
    const auto resid = e.sigma2(schedule, Scheme::kResidualBernoulli);
    REQUIRE(multi.terms.size() == resid.terms.size());
    for (std::size_t k = 0; k < multi.terms.size(); ++k) {
      if (k % 2 == 0) {
        // Sampling increments do not depend on the scheme.
        CHECK(multi.terms[k] == resid.terms[k]);
      } else {
        // gamma(x) < 1 for all x > 0, so each resampling increment shrinks.
        CHECK(resid.terms[k] <= multi.terms[k]);
      }
    }
    CHECK(resid.total <= multi.total);
  }
}

TEST_CASE("the residual resampling increment matches its definition") {
  const DiscreteHMM hmm = small_hmm(3);
  const ExactEnumerator e(hmm);
  const int t = 2;  // schedule {2}, block starts at a = 0
  double direct = 0.0;
  for (std::size_t id = 0; id < npaths(hmm, t); ++id) {
    const PathView pv = decode(hmm, id, t);
    if (pv.wprod == 0.0) continue;
    const double wstar = pv.wprod / e.eta(t);
    const double frac = wstar - std::floor(wstar);
    const double h = e.eta(t) / pv.wprod;
    direct += pv.qprob * (frac * (1.0 - frac) / wstar) * e.f(t, id) * e.f(t, id) * h;
  }
  const auto result = e.sigma2({t}, Scheme::kResidualBernoulli);
  REQUIRE(result.terms.size() == 3);
  CHECK_THAT(result.terms[1], Catch::Matchers::WithinRel(direct, 1e-12));
}

TEST_CASE("prototype variance at horizon one matches its definition") {
  const DiscreteHMM hmm = small_hmm(1);
  const ExactEnumerator e(hmm);
  double second = 0.0;
  for (std::size_t x = 0; x < npaths(hmm, 1); ++x) {
    const PathView pv = decode(hmm, x, 1);
    const double val = hmm.psi_of_path(x) * pv.wprod / e.eta(1);
    second += pv.qprob * val * val;
  }
  const auto result = e.prototype_sigma2();
  REQUIRE(result.terms.size() == 1);
  CHECK_THAT(result.total,
             Catch::Matchers::WithinRel(second - e.psi_T() * e.psi_T(), 1e-12));
}

TEST_CASE("schedule validation rejects out-of-range and unsorted stages") {
  const ExactEnumerator e(small_hmm(4));
  CHECK_THROWS_AS(e.sigma2({0}, Scheme::kMultinomial), InvalidConfigError);
  CHECK_THROWS_AS(e.sigma2({4}, Scheme::kMultinomial), InvalidConfigError);
  CHECK_THROWS_AS(e.sigma2({2, 2}, Scheme::kMultinomial), InvalidConfigError);
  CHECK_THROWS_AS(e.sigma2({3, 1}, Scheme::kMultinomial), InvalidConfigError);
  CHECK_NOTHROW(e.sigma2({1, 2, 3}, Scheme::kMultinomial));
}

TEST_CASE("block cv limits match direct enumeration") {
  const DiscreteHMM hmm = small_hmm(5);
  const ExactEnumerator e(hmm);
  for (int a : {0, 1, 2}) {
    for (int t = a + 1; t <= 4; ++t) {
      double direct = 0.0;
      const std::size_t stride = npaths(hmm, a);
      for (std::size_t id = 0; id < npaths(hmm, t); ++id) {
        const PathView pv = decode(hmm, id, t);
        const PathView pa = decode(hmm, id % stride, a);
        const double wstar = (e.eta(a) / e.eta(t)) * (pv.wprod / pa.wprod);
        const double h = e.eta(a) / pa.wprod;
        direct += pv.qprob * wstar * wstar / h;
      }
      CHECK_THAT(e.block_cv_limit(a, t),
                 Catch::Matchers::WithinAbs(direct - 1.0, 1e-12));
    }
  }
}

TEST_CASE("tau_star reproduces a greedy threshold pass over the limits") {
  const DiscreteHMM hmm = small_hmm(5);
  const ExactEnumerator e(hmm);
  // Survey the profile first so the pinned threshold is mid-gap.
  std::vector<double> first_block;
  for (int t = 1; t <= 4; ++t) first_block.push_back(e.block_cv_limit(0, t));
  const double c = 0.9 * first_block[1];

  const std::vector<int> schedule = e.tau_star(c);
  // Replay the trigger with an independent greedy pass.
  std::vector<int> expect;
  int prev = 0;
  for (int t = 1; t <= 4; ++t) {
    if (e.block_cv_limit(prev, t) >= c) {
      expect.push_back(t);
      prev = t;
    }
  }
  CHECK(schedule == expect);
  CHECK(!schedule.empty());

  // A threshold above every limit yields the empty schedule.
  double top = 0.0;
  prev = 0;
  for (int t = 1; t <= 4; ++t) top = std::max(top, e.block_cv_limit(0, t));
  CHECK(e.tau_star(2.0 * top + 1.0).empty());

  CHECK_THROWS_AS(e.tau_star(-0.5), InvalidConfigError);
}

TEST_CASE("a threshold on the knife edge is ambiguous") {
  const ExactEnumerator e(small_hmm(5));
  const double exact = e.block_cv_limit(0, 1);
  CHECK_THROWS_AS(e.tau_star(exact), AmbiguousScheduleError);
  CHECK_THROWS_AS(e.tau_star(exact + 5e-10), AmbiguousScheduleError);
  CHECK_NOTHROW(e.tau_star(exact + 1e-6));
}

TEST_CASE("constant weights make a zero threshold ambiguous") {
  DiscreteHMM hmm = small_hmm(3);
  // Proposal equal to the transition law and flat emissions give w constant.
  hmm.q1 = hmm.p1;
  hmm.q = hmm.p;
  for (auto& row : hmm.g) row = {0.5, 0.5};
  const ExactEnumerator e(hmm);
  CHECK_THAT(e.block_cv_limit(0, 1), Catch::Matchers::WithinAbs(0.0, 1e-13));
  CHECK_THROWS_AS(e.tau_star(0.0), AmbiguousScheduleError);
}

TEST_CASE("oversized state spaces fail with the budget error") {
  DiscreteHMM hmm;
  hmm.d = 4;
  hmm.T = 12;
  hmm.p1 = {0.25, 0.25, 0.25, 0.25};
  hmm.q1 = hmm.p1;
  std::vector<std::vector<double>> flat(4, std::vector<double>(4, 0.25));
  for (int t = 2; t <= hmm.T; ++t) {
    hmm.p.push_back(flat);
    hmm.q.push_back(flat);
  }
  for (int t = 1; t <= hmm.T; ++t) hmm.g.push_back({0.5, 0.5, 0.5, 0.5});
  hmm.psi_values = {0.0, 1.0, 2.0, 3.0};
  CHECK_THROWS_AS(ExactEnumerator(hmm), EnumerationBudgetError);
}

TEST_CASE("zero-likelihood observations are rejected") {
  DiscreteHMM hmm = small_hmm(2);
  hmm.g[1] = {0.0, 0.0};
  CHECK_THROWS_AS(ExactEnumerator(hmm), InconsistentObservationsError);
}

TEST_CASE("model validation catches malformed tables") {
  {
    DiscreteHMM hmm = small_hmm(2);
    hmm.p1 = {0.7, 0.4};
    CHECK_THROWS_AS(hmm.validate(), InvalidConfigError);
  }
  {
    DiscreteHMM hmm = small_hmm(2);
    hmm.q1 = {1.0, 0.0};  // misses state 1, which has p1 * g > 0
    CHECK_THROWS_AS(hmm.validate(), InvalidConfigError);
  }
  {
    DiscreteHMM hmm = small_hmm(3);
    hmm.g.pop_back();
    CHECK_THROWS_AS(hmm.validate(), InvalidConfigError);
  }
  {
    DiscreteHMM hmm = small_hmm(2);
    hmm.psi_values = {1.0};
    CHECK_THROWS_AS(hmm.validate(), InvalidConfigError);
  }
  {
    DiscreteHMM hmm = small_hmm(2);
    hmm.psi_kind = DiscreteHMM::FunctionalKind::kPathTable;
    hmm.psi_values = {1.0, 2.0, 3.0, 4.0};
    CHECK_NOTHROW(hmm.validate());
  }
}

TEST_CASE("the packed engine state mirrors the raw tables") {
  const DiscreteHMM hmm = small_hmm(3);
  const DiscreteModel model(hmm);
  Rng rng(31);
  auto state = model.initial_state();
  std::vector<int> states;
  for (int t = 1; t <= 3; ++t) {
    const auto next = model.propose(t, state, rng);
    states.push_back(next.last);
    const int prev = t == 1 ? 0 : states[static_cast<std::size_t>(t - 2)];
    const double w = hmm.weight(t, prev, next.last);
    CHECK_THAT(model.log_weight(t, state, next),
               Catch::Matchers::WithinAbs(std::log(w), 1e-14));
    state = next;
  }
  std::size_t id = 0;
  std::size_t stride = 1;
  for (int x : states) {
    id += static_cast<std::size_t>(x) * stride;
    stride *= 2;
  }
  CHECK(static_cast<std::size_t>(state.path) == id);
  CHECK(state.len == 3);
  CHECK(model.functional(state)[0] == hmm.psi_values[static_cast<std::size_t>(state.last)]);
}

TEST_CASE("exhaustive micro check certifies the estimator identities") {
  DiscreteHMM hmm = small_hmm(2);
  for (Scheme scheme : {Scheme::kMultinomial, Scheme::kResidualBernoulli}) {
    const auto result = exhaustive_prototype_check(hmm, 2, scheme);
    CHECK_THAT(result.prob_mass, Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(result.e_prototype,
               Catch::Matchers::WithinAbs(ExactEnumerator(hmm).psi_T(), 1e-12));
    CHECK(result.var_prototype > 0.0);
    CHECK(result.max_weight_identity_gap < 1e-14);
    CHECK(result.max_var_identity_gap < 1e-14);
    CHECK(result.max_martingale_gap < 1e-14);
  }
  CHECK_THROWS_AS(exhaustive_prototype_check(small_hmm(3), 2, Scheme::kMultinomial),
                  InvalidConfigError);
  CHECK_THROWS_AS(exhaustive_prototype_check(small_hmm(2), 64, Scheme::kMultinomial),
                  EnumerationBudgetError);
}

// Enumerates all restart patterns of the mean-shift model and forms the
// exact posterior mean of the current level from segment marginals.
double brute_changepoint_mean(std::span<const double> y, double rho, double xi) {
  const std::size_t horizon = y.size();
  const std::size_t patterns = std::size_t{1} << (horizon - 1);
  std::vector<double> logw(patterns);
  std::vector<double> mean(patterns);
  for (std::size_t bits = 0; bits < patterns; ++bits) {
    double lp = 0.0;
    std::size_t seg_start = 0;
    double last_mean = 0.0;
    for (std::size_t t = 0; t <= horizon; ++t) {
      const bool restart = t == horizon || (t > 0 && ((bits >> (t - 1)) & 1u) != 0);
      if (t > 0 && t < horizon) {
        lp += restart ? std::log(rho) : std::log1p(-rho);
      }
      if (!restart || t == 0) continue;
      // Segment [seg_start, t): y ~ N(0, I + xi * ones).
      const auto len = static_cast<double>(t - seg_start);
      double sum = 0.0;
      double sumsq = 0.0;
      for (std::size_t k = seg_start; k < t; ++k) {
        sum += y[k];
        sumsq += y[k] * y[k];
      }
      const double quad = sumsq - xi * sum * sum / (1.0 + xi * len);
      lp += -0.5 * len * std::log(2.0 * std::acos(-1.0)) -
            0.5 * std::log1p(xi * len) - 0.5 * quad;
      if (t == horizon) {
        last_mean = sum / (len + 1.0 / xi);
      }
      seg_start = t;
    }
    logw[bits] = lp;
    mean[bits] = last_mean;
  }
  const double norm = logsumexp(logw);
  double acc = 0.0;
  for (std::size_t bits = 0; bits < patterns; ++bits) {
    acc += std::exp(logw[bits] - norm) * mean[bits];
  }
  return acc;
}

TEST_CASE("changepoint recursion matches brute-force pattern enumeration") {
  const std::vector<double> y = {0.3, -0.5, 1.2, 2.0, 1.7, -0.1};
  const double rho = 0.15;
  const double xi = 1.3;
  const auto means = changepoint_exact_posterior_mean(y, rho, xi);
  REQUIRE(means.size() == y.size());
  for (std::size_t t = 1; t <= y.size(); ++t) {
    const std::span<const double> head(y.data(), t);
    CHECK_THAT(means[t - 1],
               Catch::Matchers::WithinAbs(brute_changepoint_mean(head, rho, xi), 1e-10));
  }
}

TEST_CASE("a vanishing restart rate recovers the single-segment mean") {
  const std::vector<double> y = {0.4, 0.9, -0.2, 1.1};
  const double xi = 2.0;
  const auto means = changepoint_exact_posterior_mean(y, 1e-9, xi);
  double prefix = 0.0;
  for (std::size_t t = 1; t <= y.size(); ++t) {
    prefix += y[t - 1];
    const double expect = prefix / (static_cast<double>(t) + 1.0 / xi);
    CHECK_THAT(means[t - 1], Catch::Matchers::WithinAbs(expect, 1e-6));
  }
}

TEST_CASE("changepoint oracle rejects invalid parameters") {
  const std::vector<double> y = {0.1};
  CHECK_THROWS_AS(changepoint_exact_posterior_mean({}, 0.5, 1.0), InvalidConfigError);
  CHECK_THROWS_AS(changepoint_exact_posterior_mean(y, 0.0, 1.0), InvalidConfigError);
  CHECK_THROWS_AS(changepoint_exact_posterior_mean(y, 1.0, 1.0), InvalidConfigError);
  CHECK_THROWS_AS(changepoint_exact_posterior_mean(y, 0.5, 0.0), InvalidConfigError);
}

}  // namespace
}  // namespace smcse

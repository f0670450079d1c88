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

#ifndef SMCSE_ACCEPTANCE_HPP
#define SMCSE_ACCEPTANCE_HPP

/**
 * \file
 * \brief End-to-end acceptance checks: seven numbered criteria that gate a
 * release, each printed as a single pass/fail line.
 *
 *  C1 exact identities hold on a live filter run (weight bookkeeping, the
 *     two routes to the estimation error, invariance to weight rescaling);
 *  C2 the unbiased prototype estimator has exactly zero bias on fully
 *     enumerated micro instances, under both resampling schemes;
 *  C3 the estimation error obeys the predicted central limit theorem and
 *     the ancestral variance estimator converges to the predicted value;
 *  C4 confidence intervals from the ancestral estimator cover at nominal
 *     rates on the change-point benchmark, while the shared-ancestry
 *     comparator overcovers under occasional resampling;
 *  C5 residual-Bernoulli resampling does not lose to multinomial, and the
 *     informed initial proposal beats the prior proposal, on the bearings
 *     benchmark under sample splitting;
 *  C6 threshold-triggered resampling times match their population limit;
 *  C7 the residual-Bernoulli offspring counts follow their declared law.
 *
 * Every run is seeded with fixed constants, so the outcome of this suite
 * is reproducible bit for bit.
 */

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "smcse/benchmarks.hpp"
#include "smcse/engine.hpp"
#include "smcse/oracle.hpp"

namespace smcse {

namespace acceptance {

/// Collects criterion verdicts and prints each as one line.
class Reporter {
 public:
  explicit Reporter(std::ostream& out) : out_(out) {}

  void criterion(int number, const std::string& name, bool ok, const std::string& details) {
    out_ << (ok ? "[PASS] " : "[FAIL] ") << 'C' << number << ' ' << name << ": " << details
         << '\n';
    if (!ok) ++failures_;
  }

  void note(const std::string& text) { out_ << "       " << text << '\n'; }

  [[nodiscard]] int failures() const { return failures_; }

 private:
  std::ostream& out_;
  int failures_ = 0;
};

inline std::string fmt(double v, int digits = 4) {
  std::ostringstream out;
  out << std::setprecision(digits) << v;
  return out.str();
}

struct SampleStats {
  double mean = 0.0;
  double var = 0.0;  ///< with the n-1 divisor
};

inline SampleStats sample_stats(const std::vector<double>& xs) {
  SampleStats s;
  if (xs.empty()) return s;
  NeumaierSum acc;
  for (double x : xs) acc.add(x);
  s.mean = acc.value() / static_cast<double>(xs.size());
  if (xs.size() < 2) return s;
  NeumaierSum ss;
  for (double x : xs) ss.add((x - s.mean) * (x - s.mean));
  s.var = ss.value() / static_cast<double>(xs.size() - 1);
  return s;
}

/// Anderson-Darling statistic against the standard normal with all
/// parameters fixed (no estimation correction).
inline double anderson_darling(std::vector<double> z) {
  std::sort(z.begin(), z.end());
  const auto n = static_cast<double>(z.size());
  NeumaierSum acc;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double lo = normal_cdf(z[i]);
    double hi = normal_cdf(z[z.size() - 1 - i]);
    lo = std::min(std::max(lo, 1e-300), 1.0 - 1e-16);
    hi = std::min(std::max(hi, 1e-300), 1.0 - 1e-16);
    acc.add((2.0 * static_cast<double>(i) + 1.0) * (std::log(lo) + std::log1p(-hi)));
  }
  return -n - acc.value() / n;
}

/// Two-state five-stage instance with a flat proposal, so the incremental
/// weights move with the emissions and threshold triggers fire mid-run.
inline DiscreteHMM identity_instance() {
  DiscreteHMM m;
  m.d = 2;
  m.T = 5;
  m.p1 = {0.6, 0.4};
  m.q1 = {0.5, 0.5};
  const std::vector<std::vector<double>> trans = {{0.8, 0.2}, {0.3, 0.7}};
  const std::vector<std::vector<double>> flat = {{0.5, 0.5}, {0.5, 0.5}};
  m.p.assign(4, trans);
  m.q.assign(4, flat);
  m.g = {{0.9, 0.3}, {0.4, 1.0}, {0.7, 0.6}, {0.2, 0.9}, {0.8, 0.5}};
  m.psi_kind = DiscreteHMM::FunctionalKind::kLastState;
  m.psi_values = {-1.0, 2.0};
  return m;
}

/// Two-state two-stage instance for the exhaustive micro checks.
inline DiscreteHMM micro_instance() {
  DiscreteHMM m;
  m.d = 2;
  m.T = 2;
  m.p1 = {0.7, 0.3};
  m.q1 = {0.55, 0.45};
  m.p = {{{0.6, 0.4}, {0.25, 0.75}}};
  m.q = {{{0.5, 0.5}, {0.5, 0.5}}};
  m.g = {{0.8, 0.35}, {0.45, 0.95}};
  m.psi_kind = DiscreteHMM::FunctionalKind::kLastState;
  m.psi_values = {1.0, -0.5};
  return m;
}

/// Two-state three-stage instance for the central-limit check.
inline DiscreteHMM clt_instance() {
  DiscreteHMM m;
  m.d = 2;
  m.T = 3;
  m.p1 = {0.5, 0.5};
  m.q1 = {0.5, 0.5};
  const std::vector<std::vector<double>> trans = {{0.75, 0.25}, {0.2, 0.8}};
  const std::vector<std::vector<double>> flat = {{0.5, 0.5}, {0.5, 0.5}};
  m.p.assign(2, trans);
  m.q.assign(2, flat);
  m.g = {{1.0, 0.45}, {0.3, 0.85}, {0.9, 0.4}};
  m.psi_kind = DiscreteHMM::FunctionalKind::kLastState;
  m.psi_values = {0.0, 1.0};
  return m;
}

/// Two-state six-stage instance whose limiting cv^2 profile has wide gaps
/// around the pinned threshold used by C6.
inline DiscreteHMM schedule_instance() {
  DiscreteHMM m;
  m.d = 2;
  m.T = 6;
  m.p1 = {0.5, 0.5};
  m.q1 = {0.5, 0.5};
  const std::vector<std::vector<double>> trans = {{0.7, 0.3}, {0.3, 0.7}};
  const std::vector<std::vector<double>> flat = {{0.5, 0.5}, {0.5, 0.5}};
  m.p.assign(5, trans);
  m.q.assign(5, flat);
  m.g = {{1.0, 0.25}, {0.35, 1.0}, {1.0, 0.3}, {0.4, 1.0}, {1.0, 0.3}, {0.6, 1.0}};
  m.psi_kind = DiscreteHMM::FunctionalKind::kLastState;
  m.psi_values = {0.0, 1.0};
  return m;
}

inline void suite_identities(Reporter& report) {
  const DiscreteHMM hmm = identity_instance();
  const DiscreteModel model(hmm);
  const ExactEnumerator oracle(hmm);
  const double psi_T = oracle.psi_T();
  const double eta_T = oracle.eta(hmm.T);

  constexpr std::size_t m = 4096;
  constexpr std::uint64_t seed = 11;
  constexpr double tol_weight = 1e-12;
  constexpr double tol_pair = 1e-10;

  double worst_weight_gap = 0.0;
  double worst_pair_gap = 0.0;
  double worst_scale_gap = 0.0;
  std::string failure;

  for (const Scheme scheme : {Scheme::kMultinomial, Scheme::kResidualBernoulli}) {
    RunOptions options;
    options.scheme = scheme;
    options.policy = ResamplePolicy::CvThreshold(0.3);
    const RunResult<DiscreteModel> run = run_filter(model, m, options, seed);
    worst_weight_gap = std::max(worst_weight_gap, run.output.diag.max_weight_identity_gap);

    // Two routes to the scaled estimation error: per-particle terminal
    // importance corrections versus the product of block mean weights.
    const Population<DiscreteModel>& pop = run.pops.front();
    NeumaierSum lhs_acc;
    std::vector<double> v(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) {
      v[i] = std::exp(pop.log_v[i]);
      const double h_last = std::exp(pop.log_block_prefix - (pop.log_cumw[i] - pop.log_v[i]));
      const double l_terminal = std::exp(pop.log_cumw[i]) / eta_T;
      const double psi = model.functional(pop.states[i])[0];
      lhs_acc.add(l_terminal * (psi - psi_T) * h_last);
    }
    const double lhs = lhs_acc.value() / static_cast<double>(pop.size());
    NeumaierSum vbar_acc;
    for (double x : v) vbar_acc.add(x);
    const double vbar = vbar_acc.value() / static_cast<double>(pop.size());
    const double estimate = run.output.estimate[0];
    const double recovered =
        lhs * eta_T * std::exp(-pop.log_block_prefix) / vbar + psi_T;
    worst_pair_gap = std::max(worst_pair_gap,
                              std::abs(recovered - estimate) / (1.0 + std::abs(estimate)));

    // Rescaling every stage's emission weights by positive constants must
    // leave the estimate, the standard errors, and the schedule unchanged.
    DiscreteHMM scaled = hmm;
    for (std::size_t t = 0; t < scaled.g.size(); ++t) {
      const double factor = 0.5 + 0.25 * static_cast<double>(t + 1);
      for (double& gv : scaled.g[t]) gv *= factor;
    }
    const RunResult<DiscreteModel> run2 = run_filter(DiscreteModel(scaled), m, options, seed);
    if (run2.output.diag.resample_times != run.output.diag.resample_times) {
      failure = "rescaling changed the resampling schedule";
    }
    const auto rel = [](double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); };
    worst_scale_gap = std::max(worst_scale_gap, rel(run2.output.estimate[0], estimate));
    worst_scale_gap = std::max(
        worst_scale_gap, rel(run2.output.var_ancestral[0].value_or(kNaN),
                             run.output.var_ancestral[0].value_or(kNaN)));
    worst_scale_gap = std::max(
        worst_scale_gap, rel(run2.output.var_genealogy[0].value_or(kNaN),
                             run.output.var_genealogy[0].value_or(kNaN)));
  }

  const bool ok = failure.empty() && worst_weight_gap <= tol_weight &&
                  worst_pair_gap <= tol_pair && worst_scale_gap <= tol_pair;
  report.criterion(1, "exact run identities", ok,
                   (failure.empty() ? "" : failure + "; ") + "weight gap " +
                       fmt(worst_weight_gap, 3) + " (tol 1e-12), error-route gap " +
                       fmt(worst_pair_gap, 3) + ", rescaling gap " + fmt(worst_scale_gap, 3) +
                       " (tol 1e-10)");
}

inline void suite_micro_oracle(Reporter& report) {
  constexpr double tol = 1e-12;
  double worst_bias = 0.0;
  double worst_mass = 0.0;
  double worst_gap = 0.0;
  double ratio_bias = 0.0;

  const DiscreteHMM two_stage = micro_instance();
  const DiscreteHMM one_stage = [&two_stage] {
    DiscreteHMM truncated = two_stage;
    truncated.T = 1;
    truncated.p.clear();
    truncated.q.clear();
    truncated.g.resize(1);
    return truncated;
  }();

  for (const DiscreteHMM* hmm : {&one_stage, &two_stage}) {
    const ExactEnumerator oracle(*hmm);
    for (const std::size_t m : {std::size_t{2}, std::size_t{3}}) {
      for (const Scheme scheme : {Scheme::kMultinomial, Scheme::kResidualBernoulli}) {
        if (hmm->T == 1 && scheme == Scheme::kResidualBernoulli) continue;
        const PrototypeCheckResult check = exhaustive_prototype_check(*hmm, m, scheme);
        worst_bias = std::max(worst_bias, std::abs(check.e_prototype - oracle.psi_T()));
        worst_mass = std::max(worst_mass, std::abs(check.prob_mass - 1.0));
        worst_gap = std::max({worst_gap, check.max_weight_identity_gap,
                              check.max_var_identity_gap, check.max_martingale_gap});
        if (hmm->T == 2) {
          ratio_bias = std::max(ratio_bias, std::abs(check.e_ratio - oracle.psi_T()));
        }
      }
    }
  }

  const bool ok = worst_bias <= tol && worst_mass <= tol && worst_gap <= tol;
  report.criterion(2, "exhaustive micro enumeration", ok,
                   "prototype bias " + fmt(worst_bias, 3) + ", mass gap " + fmt(worst_mass, 3) +
                       ", identity gap " + fmt(worst_gap, 3) + " (tol 1e-12); weighted-mean " +
                       "estimator bias " + fmt(ratio_bias, 3) + " for contrast");
}

inline void suite_clt(Reporter& report) {
  const DiscreteHMM hmm = clt_instance();
  const DiscreteModel model(hmm);
  const ExactEnumerator oracle(hmm);
  const double psi_T = oracle.psi_T();
  const std::vector<int> full_schedule = {1, 2};
  const double sigma2_exact = oracle.sigma2(full_schedule, Scheme::kMultinomial).total;

  constexpr std::size_t m = 10'000;
  constexpr int reps = 2000;
  constexpr std::uint64_t seed = 2026;
  constexpr double ad_critical = 3.857;  // 1% point, fully specified normal

  RunOptions options;  // always resample, multinomial
  std::vector<double> scaled_errors;
  std::vector<double> variance_estimates;
  scaled_errors.reserve(reps);
  for (int r = 0; r < reps; ++r) {
    const RunResult<DiscreteModel> run =
        run_filter(model, m, options, derive_seed(seed, static_cast<std::uint64_t>(r)));
    scaled_errors.push_back(std::sqrt(static_cast<double>(m)) *
                            (run.output.estimate[0] - psi_T));
    variance_estimates.push_back(run.output.var_ancestral[0].value_or(kNaN));
  }

  const SampleStats err = sample_stats(scaled_errors);
  const SampleStats vhat = sample_stats(variance_estimates);
  const double var_ratio = err.var / sigma2_exact;
  const double vhat_ratio = vhat.mean / sigma2_exact;
  std::vector<double> z = scaled_errors;
  for (double& x : z) x /= std::sqrt(sigma2_exact);
  const double a2 = anderson_darling(std::move(z));

  const bool ok = var_ratio >= 0.9 && var_ratio <= 1.1 && vhat_ratio >= 0.9 &&
                  vhat_ratio <= 1.1 && a2 < ad_critical;
  report.criterion(3, "central limit of the scaled error", ok,
                   "replicate variance / predicted " + fmt(var_ratio) +
                       ", mean estimated variance / predicted " + fmt(vhat_ratio) +
                       " (need 0.9..1.1), normality A^2 " + fmt(a2) + " (need < 3.857)");
}

inline void suite_coverage(Reporter& report) {
  constexpr int horizon = 200;
  constexpr double rho = 0.01;
  constexpr double xi = 1.0;
  constexpr std::size_t m = 2000;
  constexpr int reps = 300;
  constexpr std::uint64_t data_seed = 404;
  constexpr std::uint64_t seed = 405;

  RunOptions options;
  options.policy = ResamplePolicy::CvThreshold(2.0);

  // Each replication pairs a fresh data realization (with its exact truth)
  // with one filter run, so coverage is over the joint (data, filter) law.
  int hit1_anc = 0;
  int hit2_anc = 0;
  int hit1_gen = 0;
  for (int r = 0; r < reps; ++r) {
    const ChangePointData data =
        simulate_changepoint(horizon, rho, xi, derive_seed(data_seed, static_cast<std::uint64_t>(r)));
    const double truth =
        changepoint_exact_posterior_mean(data.observations, rho, xi).back();
    const ChangePointModel model(data.observations, rho, xi);
    const RunResult<ChangePointModel> run =
        run_filter(model, m, options, derive_seed(seed, static_cast<std::uint64_t>(r)));
    const double err = std::abs(run.output.estimate[0] - truth);
    const double se_anc = run.output.se(run.output.var_ancestral, 0).value();
    const double se_gen = run.output.se(run.output.var_genealogy, 0).value();
    if (err <= se_anc) ++hit1_anc;
    if (err <= 2.0 * se_anc) ++hit2_anc;
    if (err <= se_gen) ++hit1_gen;
  }
  const double c1 = static_cast<double>(hit1_anc) / reps;
  const double c2 = static_cast<double>(hit2_anc) / reps;
  const double g1 = static_cast<double>(hit1_gen) / reps;

  const bool ok = c1 >= 0.60 && c1 <= 0.76 && c2 >= 0.91 && c2 <= 0.985 && g1 >= 0.90 &&
                  g1 >= c1;
  report.criterion(4, "interval coverage on the change-point benchmark", ok,
                   "ancestral 1-se " + fmt(c1) + " (need 0.60..0.76), 2-se " + fmt(c2) +
                       " (need 0.91..0.985); shared-ancestry 1-se " + fmt(g1) +
                       " (need >= 0.90 and >= ancestral)");
}

inline void suite_split_residual(Reporter& report) {
  constexpr std::size_t m = 2000;
  constexpr int reps = 50;
  constexpr std::uint64_t data_seed = 505;
  constexpr std::uint64_t seed = 506;
  const std::vector<int> horizons = {4, 8, 12, 16, 20, 24};

  const BearingsData data = simulate_bearings(24, data_seed);

  struct Config {
    BearingsModel::InitialProposal initial;
    Scheme scheme;
  };
  const std::array<Config, 3> configs = {{
      {BearingsModel::InitialProposal::kInformed, Scheme::kMultinomial},
      {BearingsModel::InitialProposal::kInformed, Scheme::kResidualBernoulli},
      {BearingsModel::InitialProposal::kPrior, Scheme::kMultinomial},
  }};

  // mean_se[config][horizon index]
  std::array<std::vector<double>, 3> mean_se;
  for (auto& v : mean_se) v.assign(horizons.size(), 0.0);

  for (std::size_t h = 0; h < horizons.size(); ++h) {
    const std::vector<double> y(data.observations.begin(),
                                data.observations.begin() + horizons[h]);
    for (std::size_t cfg = 0; cfg < configs.size(); ++cfg) {
      const BearingsModel model(y, configs[cfg].initial);
      RunOptions options;
      options.scheme = configs[cfg].scheme;
      options.split_groups = 2;
      options.genealogy_variance = false;
      NeumaierSum acc;
      for (int r = 0; r < reps; ++r) {
        const std::uint64_t rep_seed = derive_seed(
            seed, (static_cast<std::uint64_t>(cfg) << 32) ^
                      (static_cast<std::uint64_t>(h) << 16) ^ static_cast<std::uint64_t>(r));
        const RunResult<BearingsModel> run = run_filter(model, m, options, rep_seed);
        acc.add(run.output.se(run.output.var_split, 0).value());
      }
      mean_se[cfg][h] = acc.value() / reps;
    }
  }

  int residual_wins = 0;
  int informed_wins = 0;
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    if (mean_se[1][h] <= mean_se[0][h]) ++residual_wins;
    if (mean_se[0][h] < mean_se[2][h]) ++informed_wins;
  }

  const bool ok = residual_wins >= 4 && informed_wins >= 5;
  report.criterion(5, "scheme and proposal comparisons on the bearings benchmark", ok,
                   "residual <= multinomial on " + std::to_string(residual_wins) +
                       "/6 horizons (need >= 4); informed < prior proposal on " +
                       std::to_string(informed_wins) + "/6 (need >= 5)");
}

inline void suite_tau_stability(Reporter& report) {
  const DiscreteHMM hmm = schedule_instance();
  const DiscreteModel model(hmm);
  const ExactEnumerator oracle(hmm);

  // Threshold pinned inside the widest gap of the limiting cv^2 profile
  // (see the margin reported on the pass line).
  constexpr double threshold = 0.5;
  constexpr std::size_t m = 100'000;
  constexpr int reps = 200;
  constexpr std::uint64_t seed = 606;

  const std::vector<int> exact = oracle.tau_star(threshold);
  double margin = kPosInf;
  {
    int prev = 0;
    for (int t = 1; t <= hmm.T - 1; ++t) {
      margin = std::min(margin, std::abs(oracle.block_cv_limit(prev, t) - threshold));
      if (std::find(exact.begin(), exact.end(), t) != exact.end()) prev = t;
    }
  }

  RunOptions options;
  options.policy = ResamplePolicy::CvThreshold(threshold);
  options.genealogy_variance = false;
  int matches = 0;
  for (int r = 0; r < reps; ++r) {
    const RunResult<DiscreteModel> run =
        run_filter(model, m, options, derive_seed(seed, static_cast<std::uint64_t>(r)));
    if (run.output.diag.resample_times == exact) ++matches;
  }

  const bool ok = matches >= 195;
  std::string exact_str;
  for (int t : exact) exact_str += (exact_str.empty() ? "" : ";") + std::to_string(t);
  report.criterion(6, "threshold-triggered schedule stability", ok,
                   std::to_string(matches) + "/200 runs matched the limit schedule {" +
                       exact_str + "} (need >= 195); threshold margin " + fmt(margin, 3));
}

inline void suite_residual_law(Reporter& report) {
  // Exact values of the residual variance factor gamma.
  double worst_gamma = 0.0;
  worst_gamma = std::max(worst_gamma, std::abs(gamma_fn(0.25) - 0.75));
  worst_gamma = std::max(worst_gamma, std::abs(gamma_fn(0.5) - 0.5));
  worst_gamma = std::max(worst_gamma, std::abs(gamma_fn(1.25) - 0.15));
  worst_gamma = std::max(worst_gamma, std::abs(gamma_fn(2.5) - 0.1));
  worst_gamma = std::max(worst_gamma, std::abs(gamma_fn(1.0) - 0.0));
  worst_gamma = std::max(worst_gamma, std::abs(gamma_fn(3.0) - 0.0));

  // Offspring counts: floor(M W) plus a Bernoulli(frac) coin, independent
  // across particles, so each count mean sits within 4 binomial standard
  // errors and each realized count is one of the two adjacent integers.
  const std::vector<double> weights = {0.30, 0.20, 0.15, 0.35};
  constexpr std::size_t m = 8;
  constexpr int draws = 100'000;
  Rng rng(707);
  std::vector<NeumaierSum> count_mean(weights.size());
  bool support_ok = true;
  bool parents_ok = true;
  for (int r = 0; r < draws; ++r) {
    const ResampleDraw draw = residual_bernoulli_draw(weights, m, rng);
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const double target = static_cast<double>(m) * weights[i];
      const auto lo = static_cast<std::int64_t>(std::floor(target));
      if (draw.counts[i] != lo && draw.counts[i] != lo + 1) support_ok = false;
      count_mean[i].add(static_cast<double>(draw.counts[i]));
      for (std::int64_t k = 0; k < draw.counts[i]; ++k) {
        if (draw.parents[cursor++] != static_cast<std::int32_t>(i)) parents_ok = false;
      }
    }
    if (cursor != draw.parents.size()) parents_ok = false;
  }
  double worst_sigmas = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double target = static_cast<double>(m) * weights[i];
    const double frac = target - std::floor(target);
    const double se = std::sqrt(std::max(frac * (1.0 - frac), 1e-12) /
                                static_cast<double>(draws));
    worst_sigmas =
        std::max(worst_sigmas,
                 std::abs(count_mean[i].value() / static_cast<double>(draws) - target) / se);
  }

  // Population of 3 with two equal weights: each count is 1 + Bernoulli(0.5)
  // independently, so the four count pairs are equally likely.
  const std::vector<double> half = {0.5, 0.5};
  std::array<int, 4> cell_hits = {0, 0, 0, 0};
  for (int r = 0; r < draws; ++r) {
    const ResampleDraw draw = residual_bernoulli_draw(half, 3, rng);
    const std::size_t cell = 2 * static_cast<std::size_t>(draw.counts[0] - 1) +
                             static_cast<std::size_t>(draw.counts[1] - 1);
    ++cell_hits[cell];
  }
  double worst_cell_sigmas = 0.0;
  const double cell_se = std::sqrt(0.25 * 0.75 / static_cast<double>(draws));
  for (int hits : cell_hits) {
    const double freq = static_cast<double>(hits) / static_cast<double>(draws);
    worst_cell_sigmas = std::max(worst_cell_sigmas, std::abs(freq - 0.25) / cell_se);
  }

  const bool ok = worst_gamma <= 1e-15 && support_ok && parents_ok && worst_sigmas <= 4.0 &&
                  worst_cell_sigmas <= 4.0;
  report.criterion(7, "residual-Bernoulli offspring law", ok,
                   "gamma gap " + fmt(worst_gamma, 3) + " (tol 1e-15), counts on {floor, floor+1} " +
                       (support_ok ? "yes" : "NO") + ", parent expansion consistent " +
                       (parents_ok ? "yes" : "NO") + ", worst mean deviation " +
                       fmt(worst_sigmas, 3) + " binomial SEs (need <= 4), equal-weight pair "
                       "frequencies off by " +
                       fmt(worst_cell_sigmas, 3) + " SEs (need <= 4)");
}

}  // namespace acceptance

/// Runs the acceptance suites whose name contains `filter` (all when the
/// filter is empty) and returns the number of failed criteria.
inline int run_acceptance(const std::string& filter, std::ostream& out) {
  using Suite = std::pair<const char*, std::function<void(acceptance::Reporter&)>>;
  const std::vector<Suite> suites = {
      {"identities", acceptance::suite_identities},
      {"micro-oracle", acceptance::suite_micro_oracle},
      {"clt", acceptance::suite_clt},
      {"coverage", acceptance::suite_coverage},
      {"split-residual", acceptance::suite_split_residual},
      {"tau-stability", acceptance::suite_tau_stability},
      {"residual-law", acceptance::suite_residual_law},
  };

  acceptance::Reporter report(out);
  bool any = false;
  for (const auto& [name, fn] : suites) {
    if (!filter.empty() && std::string(name).find(filter) == std::string::npos) continue;
    any = true;
    const auto t0 = std::chrono::steady_clock::now();
    fn(report);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << "       suite " << name << " finished in " << acceptance::fmt(secs, 3) << "s\n";
  }
  if (!any) {
    out << "no acceptance suite matches: " << filter << '\n';
    return 1;
  }
  if (report.failures() == 0) {
    out << "acceptance: all criteria passed\n";
  } else {
    out << "acceptance: " << report.failures() << " criteria failed\n";
  }
  return report.failures();
}

}  // namespace smcse

#endif  // SMCSE_ACCEPTANCE_HPP

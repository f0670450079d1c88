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

#ifndef SMCSE_ESTIMATORS_HPP
#define SMCSE_ESTIMATORS_HPP

/**
 * \file
 * \brief Point estimate and standard-error estimators for a terminal
 *        particle population.
 *
 * All estimators work on the weights and functional values of the final
 * population plus ancestry bookkeeping; none of them need the model. The
 * variance estimators target the variance of the sqrt(m)-scaled estimation
 * error, so a reported variance v yields the standard error sqrt(v / m)
 * with m the initial population size.
 *
 * Three variance constructions are provided:
 *  - var_ancestral: groups terminal particles by the index of their initial
 *    ancestor and sums squared group totals of weighted residuals. Works on
 *    a single filter pass at no extra simulation cost.
 *  - var_sample_split: runs the filter as k independent groups and combines
 *    within-group ancestral sums against leave-one-group-out centers.
 *  - var_genealogy: the shared-ancestry comparator that weights residual
 *    products by the number of generations in which two particles share
 *    an ancestor.
 */

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "smcse/common.hpp"

namespace smcse {

/// Weighted mean sum_i W_i psi_i of functional values under normalized
/// weights. Accumulation is centered so a constant functional is returned
/// exactly. Throws when every weight is zero.
inline double point_estimate(std::span<const double> norm_w, std::span<const double> psi) {
  if (norm_w.empty() || norm_w.size() != psi.size()) {
    throw ContractViolationError("point_estimate: bad input sizes");
  }
  double total = 0.0;
  for (double w : norm_w) total += w;
  if (!(total > 0.0)) {
    throw DegenerateWeightsError("point_estimate: all weights are zero", -1);
  }
  double center = kNegInf;
  for (double p : psi) center = std::max(center, p);
  double acc = 0.0;
  for (std::size_t i = 0; i < norm_w.size(); ++i) {
    acc += norm_w[i] * (psi[i] - center);
  }
  return center + acc / total;
}

/// Ancestral-origin variance estimator. Terminal particles are grouped by
/// origins[i], the index of their initial ancestor; each group contributes
/// the square of its total weighted residual (M W_i)(psi_i - mu):
///
///   var = m^-1 * sum_j ( sum_{i: origins[i]=j} (M W_i)(psi_i - mu) )^2
///
/// with M the current population size and m = m_init the initial one (the
/// two differ under residual-Bernoulli resampling). Group sums accumulate
/// in ascending origin order so results are reproducible.
inline double var_ancestral(std::span<const double> norm_w, std::span<const std::int32_t> origins,
                            std::span<const double> psi, std::size_t m_init, double mu) {
  if (norm_w.size() != origins.size() || norm_w.size() != psi.size() || norm_w.empty()) {
    throw ContractViolationError("var_ancestral: bad input sizes");
  }
  if (m_init < 1) {
    throw ContractViolationError("var_ancestral: initial population size must be positive");
  }
  const double scale = static_cast<double>(norm_w.size());
  std::vector<double> group_sum(m_init, 0.0);
  for (std::size_t i = 0; i < norm_w.size(); ++i) {
    const auto j = static_cast<std::size_t>(origins[i]);
    if (j >= m_init) {
      throw ContractViolationError("var_ancestral: origin label out of range");
    }
    group_sum[j] += scale * norm_w[i] * (psi[i] - mu);
  }
  double acc = 0.0;
  for (double g : group_sum) acc += g * g;
  return acc / static_cast<double>(m_init);
}

/// One group of a sample-splitting run: within-group normalized weights,
/// within-group origin labels in [0, m_init), functional values, and the
/// group's own point estimate.
struct SplitGroup {
  std::vector<double> norm_w;
  std::vector<std::int32_t> origins;
  std::vector<double> psi;
  std::size_t m_init = 0;
  double estimate = 0.0;
};

/// Sample-splitting variance estimator over k >= 2 independent groups.
/// Group j's residuals are centered at the average estimate of the other
/// groups, which keeps the center independent of group j:
///
///   var = m^-1 * sum_j sum_i ( sum_{l: origins_l=i} (M_j W_l)(psi_l - est_-j) )^2
///
/// where m is the total initial size over all groups.
inline double var_sample_split(std::span<const SplitGroup> groups) {
  const std::size_t k = groups.size();
  if (k < 2) {
    throw InvalidConfigError("var_sample_split: need at least two groups");
  }
  double est_total = 0.0;
  std::size_t m_total = 0;
  for (const auto& g : groups) {
    est_total += g.estimate;
    m_total += g.m_init;
  }
  double acc = 0.0;
  for (const auto& g : groups) {
    const double center = (est_total - g.estimate) / static_cast<double>(k - 1);
    const double scale = static_cast<double>(g.norm_w.size());
    std::vector<double> group_sum(g.m_init, 0.0);
    for (std::size_t l = 0; l < g.norm_w.size(); ++l) {
      group_sum[static_cast<std::size_t>(g.origins[l])] +=
          scale * g.norm_w[l] * (g.psi[l] - center);
    }
    for (double s : group_sum) acc += s * s;
  }
  return acc / static_cast<double>(m_total);
}

/// Parent maps of the resampling events of one filter pass, oldest first.
/// parents[e][j] is the pre-resampling index of post-resampling particle j
/// at the event that happened right after stage resample_times[e].
struct Genealogy {
  std::vector<int> resample_times;
  std::vector<std::vector<std::int32_t>> parents;
  int horizon = 0;
};

/// Shared-ancestry variance estimator
///
///   Vhat = M^-2 * sum_{k,l} N^{k,l} r_k r_l,
///   r_k  = (M W_k)(psi_k - psi_hat),
///
/// where N^{k,l} counts the stages s in 1..T at which terminal particles k
/// and l descend from the same stage-s particle (a particle is its own
/// ancestor at its own stage). Grouping terminal particles by their stage-s
/// ancestor turns the double sum into a sum of squared group totals, and the
/// grouping is constant between consecutive resampling events, so the cost
/// is O(M * #events) instead of O(M^2 T).
inline double var_genealogy(std::span<const double> norm_w, std::span<const double> psi,
                            double psi_hat, const Genealogy& genealogy) {
  const std::size_t size = norm_w.size();
  if (size == 0 || psi.size() != size) {
    throw ContractViolationError("var_genealogy: bad input sizes");
  }
  if (genealogy.horizon < 1) {
    throw InvalidConfigError("var_genealogy: genealogy not recorded");
  }
  std::vector<double> residual(size);
  const double scale = static_cast<double>(size);
  for (std::size_t i = 0; i < size; ++i) {
    residual[i] = scale * norm_w[i] * (psi[i] - psi_hat);
  }

  // Sum of squared residual totals over groups of equal label. Labels refer
  // to whichever historical population is current in the composition, whose
  // size may exceed the terminal one under residual-Bernoulli resampling,
  // so the bin range comes from the labels themselves.
  const auto grouped_ssq = [](std::span<const std::int32_t> labels,
                              std::span<const double> res) {
    std::int32_t top = 0;
    for (std::int32_t lab : labels) top = std::max(top, lab);
    std::vector<double> sums(static_cast<std::size_t>(top) + 1, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      sums[static_cast<std::size_t>(labels[i])] += res[i];
    }
    double acc = 0.0;
    for (double s : sums) acc += s * s;
    return acc;
  };

  std::vector<std::int32_t> labels(size);
  for (std::size_t i = 0; i < size; ++i) labels[i] = static_cast<std::int32_t>(i);

  double total = 0.0;
  int upper = genealogy.horizon;
  for (std::size_t e = genealogy.parents.size(); e-- > 0;) {
    const int tau = genealogy.resample_times[e];
    if (upper > tau) {
      total += static_cast<double>(upper - tau) * grouped_ssq(labels, residual);
    }
    const auto& pmap = genealogy.parents[e];
    for (auto& lab : labels) lab = pmap[static_cast<std::size_t>(lab)];
    upper = tau;
  }
  if (upper > 0) {
    total += static_cast<double>(upper) * grouped_ssq(labels, residual);
  }
  return total / (scale * scale);
}

/// Everything a single filter pass reports. Functionals may have one or two
/// components; component c of a field is meaningful for c < functional_dim.
/// Variances are on the sqrt(m)-scaled error scale and are absent when the
/// run cannot support the estimator (single particle, no splitting, ...).
struct FilterOutput {
  int functional_dim = 1;
  std::size_t m_init = 0;
  std::array<double, 2> estimate = {0.0, 0.0};
  std::array<std::optional<double>, 2> var_ancestral = {};
  std::array<std::optional<double>, 2> var_split = {};
  std::array<std::optional<double>, 2> var_genealogy = {};

  /// Standard error sqrt(var / m_init); absent when the variance is.
  [[nodiscard]] std::optional<double> se(const std::array<std::optional<double>, 2>& var,
                                         int comp) const {
    if (!var[static_cast<std::size_t>(comp)].has_value() || m_init == 0) return std::nullopt;
    return std::sqrt(*var[static_cast<std::size_t>(comp)] / static_cast<double>(m_init));
  }

  struct Diagnostics {
    std::vector<double> cv2_trace;           ///< cv^2 right after each propagation
    std::vector<double> log_mean_weight;     ///< log of each stage's mean incremental weight
    std::vector<int> resample_times;         ///< stages followed by a resampling event
    std::vector<std::size_t> size_trace;     ///< population size after each stage
    double max_weight_identity_gap = 0.0;    ///< worst log-scale gap in the M W = H/H~ check
    double wall_ms = 0.0;
  } diag;
};

}  // namespace smcse

#endif  // SMCSE_ESTIMATORS_HPP

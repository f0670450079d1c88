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

#ifndef SMCSE_BENCHMARKS_HPP
#define SMCSE_BENCHMARKS_HPP

/**
 * \file
 * \brief Simulation benchmark models: a normal mean-shift (change-point)
 * model with a collapsed discrete filter state, and a four-dimensional
 * bearings-only tracking model with an observation-informed initial
 * proposal. Both come with data simulators whose draw order is pinned so
 * that a seed fully determines the data set.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <ios>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "smcse/common.hpp"
#include "smcse/model.hpp"
#include "smcse/rng.hpp"

namespace smcse {

/// Observations drift with a persistent level that restarts from N(0, xi)
/// with probability rho at each stage (surely at the first stage) and is
/// observed through standard normal noise. The filter state collapses the
/// level analytically: a particle carries only the current segment start
/// and the running observation sum, the proposal draws the restart
/// indicator from its exact conditional given the new observation, and the
/// incremental weight is the one-step predictive density.
class ChangePointModel {
 public:
  struct State {
    std::int32_t seg_start = 0;  ///< 1-based stage the current segment began
    double seg_sum = 0.0;        ///< sum of observations inside the segment
  };

  ChangePointModel(std::vector<double> observations, double rho, double xi)
      : y_(std::move(observations)), rho_(rho), xi_(xi) {
    if (y_.empty()) {
      throw InvalidConfigError("change-point model needs at least one observation");
    }
    if (!(rho > 0.0) || !(rho < 1.0) || !(xi > 0.0)) {
      throw InvalidConfigError("change-point model needs 0 < rho < 1 and xi > 0");
    }
  }

  [[nodiscard]] int horizon() const { return static_cast<int>(y_.size()); }
  [[nodiscard]] int functional_dim() const { return 1; }
  [[nodiscard]] State initial_state() const { return {}; }

  [[nodiscard]] State propose(int t, const State& prev, Rng& rng) const {
    const double obs = y_[static_cast<std::size_t>(t - 1)];
    if (t == 1) {
      return {1, obs};  // the level always restarts at the first stage
    }
    const auto [log_restart, log_continue] = stage_terms(t, prev);
    const double log_total = logaddexp(log_restart, log_continue);
    const double p_restart = std::exp(log_restart - log_total);
    if (rng.uniform() < p_restart) {
      return {static_cast<std::int32_t>(t), obs};
    }
    return {prev.seg_start, prev.seg_sum + obs};
  }

  [[nodiscard]] double log_weight(int t, const State& prev, const State& /*next*/) const {
    const double obs = y_[static_cast<std::size_t>(t - 1)];
    if (t == 1) {
      return normal_logpdf(obs, 0.0, 1.0 + xi_);
    }
    const auto [log_restart, log_continue] = stage_terms(t, prev);
    return logaddexp(log_restart, log_continue);
  }

  /// Posterior mean of the level given the segment assignment.
  [[nodiscard]] std::array<double, 2> functional(const State& s) const {
    return {segment_mean(horizon(), s), 0.0};
  }

  [[nodiscard]] double segment_lambda(int t, const State& s) const {
    return 1.0 / (static_cast<double>(t - s.seg_start + 1) + 1.0 / xi_);
  }
  [[nodiscard]] double segment_mean(int t, const State& s) const {
    return segment_lambda(t, s) * s.seg_sum;
  }

  [[nodiscard]] const std::vector<double>& observations() const { return y_; }
  [[nodiscard]] double rho() const { return rho_; }
  [[nodiscard]] double xi() const { return xi_; }

 private:
  /// Log masses of restarting versus continuing the segment at stage t,
  /// given the stage-(t-1) state: rho times the fresh-segment predictive
  /// density and (1 - rho) times the continued-segment one.
  [[nodiscard]] std::pair<double, double> stage_terms(int t, const State& prev) const {
    const double obs = y_[static_cast<std::size_t>(t - 1)];
    const double log_restart = std::log(rho_) + normal_logpdf(obs, 0.0, 1.0 + xi_);
    const double log_continue =
        std::log1p(-rho_) +
        normal_logpdf(obs, segment_mean(t - 1, prev), 1.0 + segment_lambda(t - 1, prev));
    return {log_restart, log_continue};
  }

  std::vector<double> y_;
  double rho_;
  double xi_;
};

static_assert(FilterModel<ChangePointModel>);

struct ChangePointData {
  std::vector<double> levels;
  std::vector<double> observations;
};

/// Simulates the mean-shift model. Draw order per stage: the restart
/// uniform (stages after the first), the restart level normal when a
/// restart happens, then the observation normal.
inline ChangePointData simulate_changepoint(int horizon, double rho, double xi,
                                            std::uint64_t seed) {
  if (horizon < 1) {
    throw InvalidConfigError("simulation needs a positive horizon");
  }
  if (!(rho > 0.0) || !(rho < 1.0) || !(xi > 0.0)) {
    throw InvalidConfigError("simulation needs 0 < rho < 1 and xi > 0");
  }
  Rng rng(seed);
  ChangePointData data;
  const double level_sd = std::sqrt(xi);
  double level = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    const bool restart = t == 1 || rng.uniform() < rho;
    if (restart) level = level_sd * rng.normal();
    data.levels.push_back(level);
    data.observations.push_back(level + rng.normal());
  }
  return data;
}

/// Bearings-only tracking: a target moves in the plane with nearly constant
/// velocity and only the bearing from the origin is observed, through
/// N(0, 0.005^2) noise. The state is (east position, east velocity,
/// north position, north velocity). The initial proposal either samples the
/// prior or inverts the first bearing (an informed proposal that places the
/// position along the observed ray, with the exact importance weight).
class BearingsModel {
 public:
  using State = std::array<double, 4>;

  enum class InitialProposal : std::uint8_t { kPrior, kInformed };

  static constexpr double kStateNoiseSd = 0.001;
  static constexpr double kBearingNoiseSd = 0.005;
  // Independent normal priors on the initial state.
  static constexpr std::array<double, 4> kPriorMean = {0.0, 0.0, 0.4, -0.05};
  static constexpr std::array<double, 4> kPriorSd = {0.5, 0.005, 0.3, 0.01};

  BearingsModel(std::vector<double> bearings, InitialProposal initial)
      : y_(std::move(bearings)), initial_(initial) {
    if (y_.empty()) {
      throw InvalidConfigError("bearings model needs at least one observation");
    }
  }

  [[nodiscard]] int horizon() const { return static_cast<int>(y_.size()); }
  [[nodiscard]] int functional_dim() const { return 2; }
  [[nodiscard]] State initial_state() const { return {}; }

  struct InformedDraw {
    double pos_east = 0.0;
    double pos_north = 0.0;
    double log_weight = kNegInf;
  };

  /// Inverts a first bearing into a position draw. The angle is perturbed
  /// by the observation noise scale (theta = y1 + sd * xi), the east
  /// coordinate is drawn from the prior conditioned on the ray
  /// north = tan(theta) * east, and log_weight is the importance weight of
  /// the pair against prior-times-likelihood, up to a constant.
  [[nodiscard]] static InformedDraw informed_position_draw(double y1, double xi, double zeta) {
    const double ray = std::tan(y1 + kBearingNoiseSd * xi);
    const double prior_var_e = kPriorSd[0] * kPriorSd[0];
    const double prior_var_n = kPriorSd[2] * kPriorSd[2];
    // Restriction of the position prior to the ray: complete the square in
    // the east coordinate.
    const double precision = 1.0 / prior_var_e + ray * ray / prior_var_n;
    const double cond_var = 1.0 / precision;
    const double cond_mean = cond_var * (ray * kPriorMean[2] / prior_var_n);
    InformedDraw draw;
    draw.pos_east = cond_mean + std::sqrt(cond_var) * zeta;
    draw.pos_north = ray * draw.pos_east;
    if (draw.pos_east == 0.0) {
      return draw;  // bearing undefined at the origin; weight stays zero
    }
    // Prior density of the pair, times the angle-coordinate Jacobian
    // |east| * (1 + ray^2) * sqrt(cond_var), divided by the proposal
    // normal densities; the bearing likelihood cancels against the angle
    // perturbation density. Constants are dropped.
    draw.log_weight = std::log(std::abs(draw.pos_east)) + 0.5 * std::log(cond_var) +
                      std::log1p(ray * ray) -
                      draw.pos_east * draw.pos_east / (2.0 * prior_var_e) -
                      (draw.pos_north - kPriorMean[2]) * (draw.pos_north - kPriorMean[2]) /
                          (2.0 * prior_var_n) +
                      zeta * zeta / 2.0;
    return draw;
  }

  [[nodiscard]] State propose(int t, const State& prev, Rng& rng) const {
    if (t == 1) {
      State s{};
      if (initial_ == InitialProposal::kInformed) {
        const double xi = rng.normal();
        const double zeta = rng.normal();
        const InformedDraw draw =
            informed_position_draw(y_[0], xi, zeta);
        s[0] = draw.pos_east;
        s[2] = draw.pos_north;
      } else {
        s[0] = kPriorMean[0] + kPriorSd[0] * rng.normal();
        s[2] = kPriorMean[2] + kPriorSd[2] * rng.normal();
      }
      s[1] = kPriorMean[1] + kPriorSd[1] * rng.normal();
      s[3] = kPriorMean[3] + kPriorSd[3] * rng.normal();
      return s;
    }
    const double accel_e = kStateNoiseSd * rng.normal();
    const double accel_n = kStateNoiseSd * rng.normal();
    return advance_state(prev, accel_e, accel_n);
  }

  [[nodiscard]] double log_weight(int t, const State& prev, const State& next) const {
    if (t == 1) {
      if (initial_ == InitialProposal::kPrior) {
        return bearing_logpdf(y_[0], next);
      }
      // Recover the informed-draw weight from the state: the ray slope and
      // the standardized east coordinate determine it.
      if (next[0] == 0.0) return kNegInf;
      const double ray = next[2] / next[0];
      const double prior_var_e = kPriorSd[0] * kPriorSd[0];
      const double prior_var_n = kPriorSd[2] * kPriorSd[2];
      const double cond_var = 1.0 / (1.0 / prior_var_e + ray * ray / prior_var_n);
      const double cond_mean = cond_var * (ray * kPriorMean[2] / prior_var_n);
      const double zeta = (next[0] - cond_mean) / std::sqrt(cond_var);
      return std::log(std::abs(next[0])) + 0.5 * std::log(cond_var) + std::log1p(ray * ray) -
             next[0] * next[0] / (2.0 * prior_var_e) -
             (next[2] - kPriorMean[2]) * (next[2] - kPriorMean[2]) / (2.0 * prior_var_n) +
             zeta * zeta / 2.0;
    }
    (void)prev;  // dynamics are the proposal, so only the likelihood remains
    return bearing_logpdf(y_[static_cast<std::size_t>(t - 1)], next);
  }

  /// Terminal positions (east, north).
  [[nodiscard]] std::array<double, 2> functional(const State& s) const {
    return {s[0], s[2]};
  }

  [[nodiscard]] static State advance_state(const State& prev, double accel_e, double accel_n) {
    return {prev[0] + prev[1] + 0.5 * accel_e, prev[1] + accel_e,
            prev[2] + prev[3] + 0.5 * accel_n, prev[3] + accel_n};
  }

  [[nodiscard]] static double bearing_of(const State& s) { return std::atan(s[2] / s[0]); }

  [[nodiscard]] static double bearing_logpdf(double obs, const State& s) {
    if (s[0] == 0.0) return kNegInf;
    return normal_logpdf(obs, bearing_of(s), kBearingNoiseSd * kBearingNoiseSd);
  }

  [[nodiscard]] const std::vector<double>& observations() const { return y_; }
  [[nodiscard]] InitialProposal initial_proposal() const { return initial_; }

 private:
  std::vector<double> y_;
  InitialProposal initial_;
};

static_assert(FilterModel<BearingsModel>);

struct BearingsData {
  std::vector<BearingsModel::State> states;
  std::vector<double> observations;
};

/// Simulates the tracking model from the prior. Draw order per stage:
/// state noise normals (for the first stage, the four prior normals in
/// state order), then the bearing noise normal.
inline BearingsData simulate_bearings(int horizon, std::uint64_t seed) {
  if (horizon < 1) {
    throw InvalidConfigError("simulation needs a positive horizon");
  }
  Rng rng(seed);
  BearingsData data;
  BearingsModel::State s{};
  for (int t = 1; t <= horizon; ++t) {
    if (t == 1) {
      for (std::size_t k = 0; k < 4; ++k) {
        s[k] = BearingsModel::kPriorMean[k] + BearingsModel::kPriorSd[k] * rng.normal();
      }
    } else {
      const double accel_e = BearingsModel::kStateNoiseSd * rng.normal();
      const double accel_n = BearingsModel::kStateNoiseSd * rng.normal();
      s = BearingsModel::advance_state(s, accel_e, accel_n);
    }
    data.states.push_back(s);
    data.observations.push_back(BearingsModel::bearing_of(s) +
                                BearingsModel::kBearingNoiseSd * rng.normal());
  }
  return data;
}

/// Named numeric columns, the on-disk format for simulated data sets.
struct SeriesTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
};

inline void save_series_csv(const std::string& path, const SeriesTable& table) {
  if (table.names.size() != table.columns.size() || table.columns.empty()) {
    throw InvalidConfigError("series table needs one name per column");
  }
  const std::size_t rows = table.columns.front().size();
  for (const auto& col : table.columns) {
    if (col.size() != rows) {
      throw InvalidConfigError("series table columns must have equal length");
    }
  }
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot open for writing: " + path);
  }
  out << std::setprecision(17);
  for (std::size_t j = 0; j < table.names.size(); ++j) {
    out << (j ? "," : "") << table.names[j];
  }
  out << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
      out << (j ? "," : "") << table.columns[j][i];
    }
    out << '\n';
  }
  if (!out) {
    throw Error("failed while writing: " + path);
  }
}

inline SeriesTable load_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open for reading: " + path);
  }
  SeriesTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw Error("empty data file: " + path);
  }
  {
    std::istringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      table.names.push_back(cell);
    }
  }
  table.columns.resize(table.names.size());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream values(line);
    std::string cell;
    std::size_t j = 0;
    while (std::getline(values, cell, ',')) {
      if (j >= table.columns.size()) {
        throw Error("row " + std::to_string(row + 1) + " has too many cells: " + path);
      }
      table.columns[j].push_back(std::stod(cell));
      ++j;
    }
    if (j != table.columns.size()) {
      throw Error("row " + std::to_string(row + 1) + " has too few cells: " + path);
    }
    ++row;
  }
  return table;
}

}  // namespace smcse

#endif  // SMCSE_BENCHMARKS_HPP

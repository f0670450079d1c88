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
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "smcse/benchmarks.hpp"
#include "smcse/engine.hpp"
#include "smcse/oracle.hpp"

namespace smcse {
namespace {

TEST_CASE("change-point simulation replays its pinned draw order") {
  const int horizon = 12;
  const double rho = 0.2;
  const double xi = 1.5;
  const auto data = simulate_changepoint(horizon, rho, xi, 99);
  REQUIRE(data.levels.size() == 12);
  REQUIRE(data.observations.size() == 12);

  Rng rng(99);
  double level = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    const bool restart = t == 1 || rng.uniform() < rho;
    if (restart) level = std::sqrt(xi) * rng.normal();
    CHECK(data.levels[static_cast<std::size_t>(t - 1)] == level);
    CHECK(data.observations[static_cast<std::size_t>(t - 1)] == level + rng.normal());
  }

  const auto again = simulate_changepoint(horizon, rho, xi, 99);
  CHECK(again.observations == data.observations);
  CHECK_THROWS_AS(simulate_changepoint(0, rho, xi, 1), InvalidConfigError);
  CHECK_THROWS_AS(simulate_changepoint(5, 0.0, xi, 1), InvalidConfigError);
}

TEST_CASE("change-point stage one matches the fresh-segment predictive") {
  const std::vector<double> y = {0.7, -0.4, 1.1};
  const ChangePointModel model(y, 0.1, 2.0);
  Rng rng(41);
  const auto first = model.propose(1, model.initial_state(), rng);
  CHECK(first.seg_start == 1);
  CHECK(first.seg_sum == 0.7);
  CHECK_THAT(model.log_weight(1, model.initial_state(), first),
             Catch::Matchers::WithinAbs(normal_logpdf(0.7, 0.0, 3.0), 1e-14));
}

TEST_CASE("change-point weight is the one-step predictive mixture") {
  const std::vector<double> y = {0.7, -0.4, 1.1};
  const double rho = 0.1;
  const double xi = 2.0;
  const ChangePointModel model(y, rho, xi);
  const ChangePointModel::State prev{1, 0.3};  // segment of length 2 after stage 2

  // By hand: lambda_2 = 1/(2 + 1/2) = 0.4, mu_2 = 0.4 * 0.3 = 0.12.
  const double a = rho * normal_pdf(1.1, 0.0, 1.0 + xi);
  const double b = (1.0 - rho) * normal_pdf(1.1, 0.12, 1.4);
  CHECK_THAT(model.segment_lambda(2, prev), Catch::Matchers::WithinAbs(0.4, 1e-15));
  CHECK_THAT(model.segment_mean(2, prev), Catch::Matchers::WithinAbs(0.12, 1e-15));
  CHECK_THAT(model.log_weight(3, prev, prev),
             Catch::Matchers::WithinAbs(std::log(a + b), 1e-13));

  // The proposal draws the restart indicator from its exact conditional,
  // so weight times branch probability recovers each branch mass.
  Rng probe(42);
  const double u = Rng(42).uniform();
  const auto next = model.propose(3, prev, probe);
  const double p_restart = a / (a + b);
  if (u < p_restart) {
    CHECK(next.seg_start == 3);
    CHECK(next.seg_sum == 1.1);
  } else {
    CHECK(next.seg_start == 1);
    CHECK_THAT(next.seg_sum, Catch::Matchers::WithinAbs(1.4, 1e-15));
  }
  CHECK_THAT(std::exp(model.log_weight(3, prev, next)) * p_restart,
             Catch::Matchers::WithinAbs(a, 1e-14));
}

TEST_CASE("change-point functional is the collapsed level mean") {
  const std::vector<double> y = {0.7, -0.4, 1.1};
  const ChangePointModel model(y, 0.1, 2.0);
  const ChangePointModel::State s{2, 0.7};
  // At the horizon t = 3: lambda = 1/(2 + 0.5) = 0.4, mean = 0.28.
  CHECK_THAT(model.functional(s)[0], Catch::Matchers::WithinAbs(0.28, 1e-15));
  CHECK(model.functional(s)[1] == 0.0);
}

TEST_CASE("change-point filter agrees with the exact posterior mean") {
  const int horizon = 30;
  const double rho = 0.05;
  const double xi = 1.0;
  const auto data = simulate_changepoint(horizon, rho, xi, 424);
  const ChangePointModel model(data.observations, rho, xi);
  const double truth = changepoint_exact_posterior_mean(data.observations, rho, xi).back();

  RunOptions options;
  options.policy = ResamplePolicy::CvThreshold(1.0);
  const auto run = run_filter(model, 4000, options, std::uint64_t{425});
  REQUIRE(run.output.var_ancestral[0].has_value());
  const double se = *run.output.se(run.output.var_ancestral, 0);
  CHECK(se > 0.0);
  CHECK(std::abs(run.output.estimate[0] - truth) < 5.0 * se);
  CHECK(se < 0.05);  // m = 4000 keeps the error well under the level scale
}

TEST_CASE("bearings state advance matches the kinematics by hand") {
  const BearingsModel::State prev = {1.0, 0.2, -0.5, 0.1};
  const auto next = BearingsModel::advance_state(prev, 0.01, -0.02);
  CHECK_THAT(next[0], Catch::Matchers::WithinAbs(1.205, 1e-15));
  CHECK_THAT(next[1], Catch::Matchers::WithinAbs(0.21, 1e-15));
  CHECK_THAT(next[2], Catch::Matchers::WithinAbs(-0.41, 1e-15));
  CHECK_THAT(next[3], Catch::Matchers::WithinAbs(0.08, 1e-15));

  const BearingsModel::State s = {2.0, 0.0, 1.0, 0.0};
  CHECK_THAT(BearingsModel::bearing_of(s), Catch::Matchers::WithinAbs(std::atan(0.5), 1e-15));
  CHECK_THAT(BearingsModel::bearing_logpdf(0.46, s),
             Catch::Matchers::WithinAbs(normal_logpdf(0.46, std::atan(0.5), 0.000025), 1e-12));
}

TEST_CASE("bearings prior proposal weighs by the bearing likelihood") {
  const std::vector<double> y = {0.4, 0.39};
  const BearingsModel model(y, BearingsModel::InitialProposal::kPrior);
  Rng rng(43);
  const auto s = model.propose(1, model.initial_state(), rng);
  CHECK_THAT(model.log_weight(1, model.initial_state(), s),
             Catch::Matchers::WithinAbs(BearingsModel::bearing_logpdf(0.4, s), 1e-14));

  // Later stages: dynamics are the proposal, so the weight is the likelihood.
  const auto s2 = model.propose(2, s, rng);
  CHECK_THAT(model.log_weight(2, s, s2),
             Catch::Matchers::WithinAbs(BearingsModel::bearing_logpdf(0.39, s2), 1e-14));

  // And the proposal replays as prior normals plus the kinematic advance.
  Rng replay(43);
  BearingsModel::State expect{};
  expect[0] = BearingsModel::kPriorMean[0] + BearingsModel::kPriorSd[0] * replay.normal();
  expect[2] = BearingsModel::kPriorMean[2] + BearingsModel::kPriorSd[2] * replay.normal();
  expect[1] = BearingsModel::kPriorMean[1] + BearingsModel::kPriorSd[1] * replay.normal();
  expect[3] = BearingsModel::kPriorMean[3] + BearingsModel::kPriorSd[3] * replay.normal();
  CHECK(s == expect);
  const double accel_east = BearingsModel::kStateNoiseSd * replay.normal();
  const double accel_north = BearingsModel::kStateNoiseSd * replay.normal();
  const auto e2 = BearingsModel::advance_state(expect, accel_east, accel_north);
  CHECK(s2 == e2);
}

TEST_CASE("informed draw carries the exact importance weight") {
  // The reported weight must equal prior * likelihood / proposal-density up
  // to one constant shared by every draw; the proposal density follows from
  // the (xi, zeta) -> (east, north) change of variables.
  const double y1 = 0.38;
  const double sd = BearingsModel::kBearingNoiseSd;
  Rng rng(44);
  double reference = kNaN;
  for (int k = 0; k < 200; ++k) {
    const double xi = rng.normal();
    const double zeta = rng.normal();
    const auto draw = BearingsModel::informed_position_draw(y1, xi, zeta);
    REQUIRE(draw.pos_east != 0.0);

    const double theta = y1 + sd * xi;
    const double ray = std::tan(theta);
    const double var_e = BearingsModel::kPriorSd[0] * BearingsModel::kPriorSd[0];
    const double var_n = BearingsModel::kPriorSd[2] * BearingsModel::kPriorSd[2];
    const double cond_var = 1.0 / (1.0 / var_e + ray * ray / var_n);
    const double jac = sd * (1.0 + ray * ray) * std::sqrt(cond_var) * std::abs(draw.pos_east);
    const double log_q = normal_logpdf(xi, 0.0, 1.0) + normal_logpdf(zeta, 0.0, 1.0) -
                         std::log(jac);
    const double log_prior = normal_logpdf(draw.pos_east, 0.0, var_e) +
                             normal_logpdf(draw.pos_north, BearingsModel::kPriorMean[2], var_n);
    const BearingsModel::State s = {draw.pos_east, 0.0, draw.pos_north, 0.0};
    const double log_lik = BearingsModel::bearing_logpdf(y1, s);
    const double gap = draw.log_weight - (log_prior + log_lik - log_q);
    if (std::isnan(reference)) reference = gap;
    CHECK_THAT(gap, Catch::Matchers::WithinAbs(reference, 1e-9));
  }
}

TEST_CASE("informed stage-one weight is recovered from the state") {
  const std::vector<double> y = {0.38, 0.37};
  const BearingsModel model(y, BearingsModel::InitialProposal::kInformed);
  Rng rng(45);
  Rng replay(45);
  for (int k = 0; k < 50; ++k) {
    const auto s = model.propose(1, model.initial_state(), rng);
    const double xi = replay.normal();
    const double zeta = replay.normal();
    replay.normal();  // east velocity
    replay.normal();  // north velocity
    const auto draw = BearingsModel::informed_position_draw(y[0], xi, zeta);
    CHECK(s[0] == draw.pos_east);
    CHECK(s[2] == draw.pos_north);
    CHECK_THAT(model.log_weight(1, model.initial_state(), s),
               Catch::Matchers::WithinAbs(draw.log_weight, 1e-10));
  }
}

TEST_CASE("bearings simulation replays its pinned draw order") {
  const auto data = simulate_bearings(8, 46);
  REQUIRE(data.states.size() == 8);
  Rng rng(46);
  BearingsModel::State s{};
  for (int t = 1; t <= 8; ++t) {
    if (t == 1) {
      for (std::size_t k = 0; k < 4; ++k) {
        s[k] = BearingsModel::kPriorMean[k] + BearingsModel::kPriorSd[k] * rng.normal();
      }
    } else {
      const double accel_east = BearingsModel::kStateNoiseSd * rng.normal();
      const double accel_north = BearingsModel::kStateNoiseSd * rng.normal();
      s = BearingsModel::advance_state(s, accel_east, accel_north);
    }
    CHECK(data.states[static_cast<std::size_t>(t - 1)] == s);
    CHECK(data.observations[static_cast<std::size_t>(t - 1)] ==
          BearingsModel::bearing_of(s) + BearingsModel::kBearingNoiseSd * rng.normal());
  }
}

TEST_CASE("series tables round-trip through csv exactly") {
  SeriesTable table;
  table.names = {"t", "y"};
  table.columns = {{1.0, 2.0, 3.0},
                   {0.1, -3.0000000000000004, 12345678.901234567}};
  const std::string path = "series_roundtrip_test.csv";
  save_series_csv(path, table);
  const SeriesTable loaded = load_series_csv(path);
  REQUIRE(loaded.names == table.names);
  REQUIRE(loaded.columns.size() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    REQUIRE(loaded.columns[j].size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(loaded.columns[j][i] == table.columns[j][i]);
    }
  }
  std::remove(path.c_str());

  SeriesTable ragged;
  ragged.names = {"a", "b"};
  ragged.columns = {{1.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(save_series_csv(path, ragged), InvalidConfigError);
  CHECK_THROWS_AS(load_series_csv("does_not_exist_anywhere.csv"), Error);
}

}  // namespace
}  // namespace smcse

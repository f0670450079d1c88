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

// Command-line front end: replicated filter experiments, the acceptance
// suite, data-set generation, and exact oracle queries on finite-state
// models.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smcse/acceptance.hpp"
#include "smcse/benchmarks.hpp"
#include "smcse/experiment.hpp"
#include "smcse/model_io.hpp"
#include "smcse/oracle.hpp"

namespace {

smcse::ExperimentConfig build_config(const std::string& config_path,
                                     const std::vector<std::string>& sets) {
  std::vector<std::pair<std::string, std::string>> pairs;
  if (!config_path.empty()) {
    pairs = smcse::load_config_file(config_path);
  }
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw smcse::InvalidConfigError("--set needs key=value, got: " + kv);
    }
    pairs.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  smcse::ExperimentConfig cfg;
  for (const auto& [key, value] : pairs) {
    smcse::apply_config_pair(cfg, key, value);
  }
  return cfg;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& sets) {
  const smcse::ExperimentConfig cfg = build_config(config_path, sets);
  const smcse::ExperimentResult result = smcse::run_experiment(cfg);
  if (cfg.out_csv.empty()) {
    std::cout << result.csv;
  } else {
    std::cout << "wrote " << result.rows.size() << " rows to " << cfg.out_csv << '\n';
  }
  if (cfg.out_json.empty()) {
    std::cout << result.aggregate.dump(2) << '\n';
  } else {
    std::cout << "wrote summary to " << cfg.out_json << '\n';
  }
  const bool complete = result.aggregate.at("complete").get<bool>();
  return complete ? 0 : 2;
}

int cmd_gen_data(const std::string& model, int horizon, std::uint64_t seed, double rho,
                 double xi, const std::string& out_path) {
  smcse::SeriesTable table;
  if (model == "changepoint") {
    const smcse::ChangePointData data = smcse::simulate_changepoint(horizon, rho, xi, seed);
    table.names = {"t", "y", "level"};
    table.columns.resize(3);
    for (int t = 1; t <= horizon; ++t) {
      table.columns[0].push_back(t);
      table.columns[1].push_back(data.observations[static_cast<std::size_t>(t - 1)]);
      table.columns[2].push_back(data.levels[static_cast<std::size_t>(t - 1)]);
    }
  } else if (model == "bearings") {
    const smcse::BearingsData data = smcse::simulate_bearings(horizon, seed);
    table.names = {"t", "y", "pos_east", "vel_east", "pos_north", "vel_north"};
    table.columns.resize(6);
    for (int t = 1; t <= horizon; ++t) {
      const auto& s = data.states[static_cast<std::size_t>(t - 1)];
      table.columns[0].push_back(t);
      table.columns[1].push_back(data.observations[static_cast<std::size_t>(t - 1)]);
      for (std::size_t k = 0; k < 4; ++k) table.columns[2 + k].push_back(s[k]);
    }
  } else {
    throw smcse::InvalidConfigError("gen-data supports changepoint and bearings, got: " + model);
  }
  smcse::save_series_csv(out_path, table);
  std::cout << "wrote " << horizon << " stages to " << out_path << '\n';
  return 0;
}

int cmd_oracle(const std::string& model_file, const std::string& schedule_text,
               const std::string& scheme_text, double threshold, bool has_threshold) {
  const smcse::DiscreteHMM hmm = smcse::load_discrete_hmm(model_file);
  const smcse::ExactEnumerator oracle(hmm);

  std::vector<int> schedule;
  if (!schedule_text.empty()) {
    std::istringstream in(schedule_text);
    std::string cell;
    while (std::getline(in, cell, ';')) {
      schedule.push_back(smcse::detail::parse_number<int>(cell, "schedule"));
    }
  }
  const smcse::Scheme scheme = scheme_text == "residual" ? smcse::Scheme::kResidualBernoulli
                                                         : smcse::Scheme::kMultinomial;

  nlohmann::ordered_json j;
  j["psi_T"] = oracle.psi_T();
  {
    nlohmann::ordered_json eta = nlohmann::ordered_json::array();
    for (int t = 0; t <= hmm.T; ++t) eta.push_back(oracle.eta(t));
    j["eta"] = eta;
  }
  {
    const smcse::ExactEnumerator::Sigma2Result s2 = oracle.sigma2(schedule, scheme);
    j["schedule"] = schedule;
    j["scheme"] = scheme_text.empty() ? "multinomial" : scheme_text;
    j["sigma2"] = s2.total;
    j["sigma2_terms"] = s2.terms;
  }
  j["prototype_sigma2"] = oracle.prototype_sigma2().total;
  {
    nlohmann::ordered_json cv = nlohmann::ordered_json::array();
    int prev = 0;
    for (int t = 1; t <= hmm.T - 1; ++t) {
      cv.push_back(oracle.block_cv_limit(prev, t));
      if (std::find(schedule.begin(), schedule.end(), t) != schedule.end()) prev = t;
    }
    j["block_cv_limit"] = cv;
  }
  if (has_threshold) {
    j["threshold"] = threshold;
    j["tau_star"] = oracle.tau_star(threshold);
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequential Monte Carlo experiments with grouped standard errors"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run a replicated filter experiment");
  std::string config_path;
  std::vector<std::string> sets;
  run->add_option("-c,--config", config_path, "key=value configuration file");
  run->add_option("-s,--set", sets, "override one configuration key (key=value)");

  // accept
  auto* accept = app.add_subcommand("accept", "run the acceptance criteria");
  std::string suite_filter;
  accept->add_option("--suite", suite_filter, "run only suites whose name contains this");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "simulate a benchmark data set");
  std::string gen_model = "changepoint";
  int gen_horizon = 100;
  std::uint64_t gen_seed = 1;
  double gen_rho = 0.01;
  double gen_xi = 1.0;
  std::string gen_out = "data.csv";
  gen->add_option("--model", gen_model, "changepoint or bearings");
  gen->add_option("--horizon", gen_horizon, "number of stages");
  gen->add_option("--seed", gen_seed, "simulation seed");
  gen->add_option("--rho", gen_rho, "change-point restart probability");
  gen->add_option("--xi", gen_xi, "change-point restart variance");
  gen->add_option("-o,--out", gen_out, "output CSV path")->required();

  // oracle
  auto* oracle = app.add_subcommand("oracle", "exact values for a finite-state model");
  std::string oracle_file;
  std::string oracle_schedule;
  std::string oracle_scheme = "multinomial";
  double oracle_threshold = 0.0;
  oracle->add_option("--model-file", oracle_file, "model JSON path")->required();
  oracle->add_option("--schedule", oracle_schedule, "resampling stages, ';'-separated");
  oracle->add_option("--scheme", oracle_scheme, "multinomial or residual")
      ->check(CLI::IsMember({"multinomial", "residual"}));
  auto* thr = oracle->add_option("--threshold", oracle_threshold,
                                 "also report the limiting schedule for this cv^2 threshold");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, sets);
    if (accept->parsed()) {
      return smcse::run_acceptance(suite_filter, std::cout) == 0 ? 0 : 1;
    }
    if (gen->parsed()) {
      return cmd_gen_data(gen_model, gen_horizon, gen_seed, gen_rho, gen_xi, gen_out);
    }
    if (oracle->parsed()) {
      return cmd_oracle(oracle_file, oracle_schedule, oracle_scheme, oracle_threshold,
                        thr->count() > 0);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

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

#ifndef SMCSE_MODEL_IO_HPP
#define SMCSE_MODEL_IO_HPP

/**
 * \file
 * \brief JSON serialization for finite-state models and the adapter that
 * runs one through the runtime-assembled GenericModel interface.
 */

#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smcse/common.hpp"
#include "smcse/model.hpp"
#include "smcse/oracle.hpp"
#include "smcse/rng.hpp"

namespace smcse {

inline nlohmann::ordered_json discrete_hmm_to_json(const DiscreteHMM& model) {
  nlohmann::ordered_json j;
  j["d"] = model.d;
  j["T"] = model.T;
  j["p1"] = model.p1;
  j["q1"] = model.q1;
  j["p"] = model.p;
  j["q"] = model.q;
  j["g"] = model.g;
  j["psi"] = {
      {"kind",
       model.psi_kind == DiscreteHMM::FunctionalKind::kLastState ? "last_state" : "path_table"},
      {"values", model.psi_values},
  };
  return j;
}

inline DiscreteHMM discrete_hmm_from_json(const nlohmann::json& j) {
  DiscreteHMM model;
  try {
    model.d = j.at("d").get<int>();
    model.T = j.at("T").get<int>();
    model.p1 = j.at("p1").get<std::vector<double>>();
    model.q1 = j.at("q1").get<std::vector<double>>();
    model.p = j.at("p").get<std::vector<std::vector<std::vector<double>>>>();
    model.q = j.at("q").get<std::vector<std::vector<std::vector<double>>>>();
    model.g = j.at("g").get<std::vector<std::vector<double>>>();
    const auto& psi = j.at("psi");
    const auto kind = psi.at("kind").get<std::string>();
    if (kind == "last_state") {
      model.psi_kind = DiscreteHMM::FunctionalKind::kLastState;
    } else if (kind == "path_table") {
      model.psi_kind = DiscreteHMM::FunctionalKind::kPathTable;
    } else {
      throw InvalidConfigError("unknown functional kind: " + kind);
    }
    model.psi_values = psi.at("values").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfigError(std::string("malformed model JSON: ") + e.what());
  }
  model.validate();
  return model;
}

inline void save_discrete_hmm(const std::string& path, const DiscreteHMM& model) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot open for writing: " + path);
  }
  out << discrete_hmm_to_json(model).dump(2) << '\n';
  if (!out) {
    throw Error("failed while writing: " + path);
  }
}

inline DiscreteHMM load_discrete_hmm(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open for reading: " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfigError(std::string("malformed model JSON: ") + e.what());
  }
  return discrete_hmm_from_json(j);
}

/// Runs a finite-state model through the runtime-assembled path-state
/// interface. Proposal draws use one categorical draw per stage, the same
/// protocol as the dedicated adapter, so a shared seed yields the same
/// particle trajectories through either interface.
inline GenericModel generic_from_discrete(const DiscreteHMM& model) {
  model.validate();
  auto shared = std::make_shared<const DiscreteHMM>(model);

  struct Tables {
    std::vector<double> cdf1;
    std::vector<std::vector<std::vector<double>>> cdf;  // [t-2][prev] cumulative proposal
  };
  auto tables = std::make_shared<Tables>();
  tables->cdf1 = cumulative(shared->q1);
  tables->cdf.resize(shared->q.size());
  for (std::size_t k = 0; k < shared->q.size(); ++k) {
    for (const auto& row : shared->q[k]) {
      tables->cdf[k].push_back(cumulative(row));
    }
  }

  const auto prev_of = [](std::span<const double> prefix) {
    return prefix.empty() ? 0 : static_cast<int>(prefix.back());
  };
  const auto log_of = [](double v) { return v > 0.0 ? std::log(v) : kNegInf; };

  GenericModel::Sampler transition_sampler = [shared](int t, std::span<const double> prefix,
                                                      Rng& rng) {
    // Forward simulation from the chain law; used by tests, not the filter.
    std::vector<double> row =
        t == 1 ? shared->p1
               : shared->p[static_cast<std::size_t>(t - 2)]
                          [static_cast<std::size_t>(prefix.back())];
    return static_cast<double>(rng.categorical(cumulative(row)));
  };
  GenericModel::ConditionalLogPdf transition_logpdf =
      [shared, prev_of, log_of](int t, std::span<const double> prefix, double x) {
        const auto ux = static_cast<std::size_t>(x);
        return log_of(t == 1 ? shared->p1[ux]
                             : shared->p[static_cast<std::size_t>(t - 2)]
                                        [static_cast<std::size_t>(prev_of(prefix))][ux]);
      };
  GenericModel::EmissionLogPdf emission_logpdf = [shared, log_of](int t, double /*y*/, double x) {
    // Observations are folded into the per-stage emission weights.
    return log_of(shared->g[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(x)]);
  };
  GenericModel::Sampler proposal_sampler = [tables](int t, std::span<const double> prefix,
                                                    Rng& rng) {
    const auto& cdf = t == 1 ? tables->cdf1
                             : tables->cdf[static_cast<std::size_t>(t - 2)]
                                          [static_cast<std::size_t>(prefix.back())];
    return static_cast<double>(rng.categorical(cdf));
  };
  GenericModel::ConditionalLogPdf proposal_logpdf =
      [shared, prev_of, log_of](int t, std::span<const double> prefix, double x) {
        return log_of(shared->proposal(t, prev_of(prefix), static_cast<int>(x)));
      };
  GenericModel::Functional functional = [shared](std::span<const double> path) {
    std::size_t id = 0;
    std::size_t stride = 1;
    for (double x : path) {
      id += static_cast<std::size_t>(x) * stride;
      stride *= static_cast<std::size_t>(shared->d);
    }
    return shared->psi_of_path(id);
  };

  std::vector<double> placeholder_obs(static_cast<std::size_t>(model.T));
  std::iota(placeholder_obs.begin(), placeholder_obs.end(), 1.0);

  return make_generic_model(model.T, std::move(transition_sampler), std::move(transition_logpdf),
                            std::move(emission_logpdf), std::move(proposal_sampler),
                            std::move(proposal_logpdf), std::move(placeholder_obs),
                            std::move(functional));
}

}  // namespace smcse

#endif  // SMCSE_MODEL_IO_HPP

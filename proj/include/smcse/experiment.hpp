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

#ifndef SMCSE_EXPERIMENT_HPP
#define SMCSE_EXPERIMENT_HPP

/**
 * \file
 * \brief Replicated filter experiments: configuration, execution, and
 * reporting.
 *
 * An experiment runs the filter `reps` times on one data set, each
 * replication with an independent seed derived from the master seed and the
 * replication index, and reports one CSV row per replication plus an
 * aggregate JSON summary. Replications may run on several threads; results
 * are keyed by replication index, so the outputs do not depend on the
 * thread count. A replication that throws becomes a row of NaNs and a
 * failure record instead of aborting the others.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smcse/benchmarks.hpp"
#include "smcse/common.hpp"
#include "smcse/engine.hpp"
#include "smcse/model_io.hpp"
#include "smcse/oracle.hpp"

namespace smcse {

struct ExperimentConfig {
  std::string model = "changepoint";  ///< changepoint | bearings | bearings-prior | discrete
  std::string model_file;             ///< finite-state model JSON (model = discrete)
  std::string data_file;              ///< observations CSV; empty = simulate
  int horizon = 100;                  ///< ignored for discrete (the file sets it)
  std::size_t particles = 1000;
  int reps = 1;
  std::uint64_t seed = 1;       ///< master seed; replication r uses derive_seed(seed, r)
  std::uint64_t data_seed = 1;  ///< seed of the simulated data set
  Scheme scheme = Scheme::kMultinomial;
  std::string policy = "always";  ///< always | never | cv:<threshold>
  std::size_t split_groups = 1;
  bool genealogy_variance = true;
  double rho = 0.01;  ///< change-point restart probability
  double xi = 1.0;    ///< change-point restart variance
  int threads = 0;    ///< 0 = SMCSE_THREADS environment variable, else 1
  std::string out_csv;
  std::string out_json;
};

inline ResamplePolicy parse_policy(const std::string& text) {
  if (text == "always") return ResamplePolicy::Always();
  if (text == "never") return ResamplePolicy::Never();
  if (text.rfind("cv:", 0) == 0) {
    std::size_t used = 0;
    double c = 0.0;
    try {
      c = std::stod(text.substr(3), &used);
    } catch (const std::exception&) {
      throw InvalidConfigError("bad resampling threshold: " + text);
    }
    if (used != text.size() - 3 || !(c >= 0.0)) {
      throw InvalidConfigError("bad resampling threshold: " + text);
    }
    return ResamplePolicy::CvThreshold(c);
  }
  throw InvalidConfigError("unknown policy (use always, never, or cv:<c>): " + text);
}

namespace detail {

inline bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw InvalidConfigError("bad boolean for " + key + ": " + value);
}

template <class T>
T parse_number(const std::string& value, const std::string& key) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) {
    throw InvalidConfigError("bad value for " + key + ": " + value);
  }
  return out;
}

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace detail

/// Applies one key=value setting. Unknown keys and malformed values throw.
inline void apply_config_pair(ExperimentConfig& cfg, const std::string& key,
                              const std::string& value) {
  if (key == "model") {
    if (value != "changepoint" && value != "bearings" && value != "bearings-prior" &&
        value != "discrete") {
      throw InvalidConfigError("unknown model: " + value);
    }
    cfg.model = value;
  } else if (key == "model_file") {
    cfg.model_file = value;
  } else if (key == "data_file") {
    cfg.data_file = value;
  } else if (key == "horizon") {
    cfg.horizon = detail::parse_number<int>(value, key);
  } else if (key == "particles") {
    cfg.particles = detail::parse_number<std::size_t>(value, key);
  } else if (key == "reps") {
    cfg.reps = detail::parse_number<int>(value, key);
  } else if (key == "seed") {
    cfg.seed = detail::parse_number<std::uint64_t>(value, key);
  } else if (key == "data_seed") {
    cfg.data_seed = detail::parse_number<std::uint64_t>(value, key);
  } else if (key == "scheme") {
    if (value == "multinomial") {
      cfg.scheme = Scheme::kMultinomial;
    } else if (value == "residual") {
      cfg.scheme = Scheme::kResidualBernoulli;
    } else {
      throw InvalidConfigError("unknown scheme (use multinomial or residual): " + value);
    }
  } else if (key == "policy") {
    (void)parse_policy(value);  // validate eagerly
    cfg.policy = value;
  } else if (key == "split_groups") {
    cfg.split_groups = detail::parse_number<std::size_t>(value, key);
  } else if (key == "genealogy_variance") {
    cfg.genealogy_variance = detail::parse_bool(value, key);
  } else if (key == "rho") {
    cfg.rho = detail::parse_number<double>(value, key);
  } else if (key == "xi") {
    cfg.xi = detail::parse_number<double>(value, key);
  } else if (key == "threads") {
    cfg.threads = detail::parse_number<int>(value, key);
  } else if (key == "out_csv") {
    cfg.out_csv = value;
  } else if (key == "out_json") {
    cfg.out_json = value;
  } else {
    throw InvalidConfigError("unknown configuration key: " + key);
  }
}

/// Parses `key = value` lines; '#' starts a comment, blank lines are
/// skipped. Returns the pairs in file order (later settings win when
/// applied in order).
inline std::vector<std::pair<std::string, std::string>> parse_config_stream(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfigError("config line " + std::to_string(lineno) +
                               " is not key=value: " + stripped);
    }
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw InvalidConfigError("config line " + std::to_string(lineno) + " has an empty key");
    }
    pairs.emplace_back(key, value);
  }
  return pairs;
}

inline std::vector<std::pair<std::string, std::string>> load_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open config file: " + path);
  }
  return parse_config_stream(in);
}

/// Outcome of one replication, reduced to what reporting needs.
struct RepOutcome {
  int rep = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  FilterOutput output;
  std::string tau_list;     ///< resampling stages, ';'-joined, '|' between split groups
  std::size_t m_final = 0;  ///< total terminal population size
  int resample_events = 0;  ///< total resampling events across groups
};

struct ExperimentResult {
  ExperimentConfig config;
  std::optional<std::array<double, 2>> truth;  ///< exact posterior mean when computable
  std::vector<RepOutcome> rows;
  nlohmann::ordered_json aggregate;
  std::string csv;
};

namespace detail {

inline int resolve_threads(int configured) {
  if (configured > 0) return configured;
  if (const char* env = std::getenv("SMCSE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

/// Runs fn(i) for i in [0, n) on `threads` threads with static striping.
/// fn must confine its effects to index i.
template <class Fn>
void parallel_for(int n, int threads, const Fn& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

inline double opt_or_nan(const std::optional<double>& v) { return v.value_or(kNaN); }

template <FilterModel M>
void run_replications(const M& model, const ExperimentConfig& cfg,
                      std::vector<RepOutcome>& rows) {
  RunOptions options;
  options.scheme = cfg.scheme;
  options.policy = parse_policy(cfg.policy);
  options.split_groups = cfg.split_groups;
  options.genealogy_variance = cfg.genealogy_variance;

  rows.assign(static_cast<std::size_t>(cfg.reps), RepOutcome{});
  parallel_for(cfg.reps, resolve_threads(cfg.threads), [&](int r) {
    RepOutcome& row = rows[static_cast<std::size_t>(r)];
    row.rep = r;
    row.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
    try {
      const RunResult<M> result = run_filter(model, cfg.particles, options, row.seed);
      row.output = result.output;
      std::string taus;
      for (std::size_t g = 0; g < result.pops.size(); ++g) {
        if (g) taus += '|';
        const auto& times = result.pops[g].genealogy.resample_times;
        for (std::size_t e = 0; e < times.size(); ++e) {
          if (e) taus += ';';
          taus += std::to_string(times[e]);
        }
        row.m_final += result.pops[g].size();
        row.resample_events += static_cast<int>(times.size());
      }
      row.tau_list = std::move(taus);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
      row.output.estimate = {kNaN, kNaN};
    }
  });
}

}  // namespace detail

/// Renders the per-replication table. Column layout depends only on the
/// functional dimension and on whether an exact truth is attached.
inline std::string render_csv(const ExperimentResult& result) {
  const int dim = result.rows.empty() ? 1 : result.rows.front().output.functional_dim;
  std::ostringstream out;
  out << std::setprecision(17);
  const auto per_component = [&](const std::string& name) {
    for (int c = 0; c < dim; ++c) {
      out << ',' << name << (c ? std::to_string(c + 1) : "");
    }
  };
  out << "rep,seed,m,T,scheme,policy";
  per_component("estimate");
  per_component("se_ancestral");
  per_component("se_split");
  per_component("se_genealogy");
  out << ",resamples,tau_list,m_final,runtime_ms";
  if (result.truth.has_value()) per_component("truth");
  out << '\n';

  const char* scheme_name =
      result.config.scheme == Scheme::kMultinomial ? "multinomial" : "residual";
  for (const RepOutcome& row : result.rows) {
    out << row.rep << ',' << row.seed << ',' << result.config.particles << ','
        << result.config.horizon << ',' << scheme_name << ',' << result.config.policy;
    const FilterOutput& o = row.output;
    for (int c = 0; c < dim; ++c) {
      out << ',' << detail::format_double(o.estimate[static_cast<std::size_t>(c)]);
    }
    for (int c = 0; c < dim; ++c) {
      out << ',' << detail::format_double(detail::opt_or_nan(o.se(o.var_ancestral, c)));
    }
    for (int c = 0; c < dim; ++c) {
      out << ',' << detail::format_double(detail::opt_or_nan(o.se(o.var_split, c)));
    }
    for (int c = 0; c < dim; ++c) {
      out << ',' << detail::format_double(detail::opt_or_nan(o.se(o.var_genealogy, c)));
    }
    out << ',' << row.resample_events << ',' << row.tau_list << ',' << row.m_final << ','
        << detail::format_double(o.diag.wall_ms);
    if (result.truth.has_value()) {
      for (int c = 0; c < dim; ++c) {
        out << ',' << detail::format_double((*result.truth)[static_cast<std::size_t>(c)]);
      }
    }
    out << '\n';
  }
  return out.str();
}

/// Aggregate summary across replications. NaN-valued moments become null in
/// the JSON; coverage blocks appear only when an exact truth is attached.
inline nlohmann::ordered_json aggregate_json(const ExperimentResult& result) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  const ExperimentConfig& cfg = result.config;
  j["config"] = {
      {"model", cfg.model},
      {"model_file", cfg.model_file},
      {"data_file", cfg.data_file},
      {"horizon", cfg.horizon},
      {"particles", cfg.particles},
      {"reps", cfg.reps},
      {"seed", cfg.seed},
      {"data_seed", cfg.data_seed},
      {"scheme", cfg.scheme == Scheme::kMultinomial ? "multinomial" : "residual"},
      {"policy", cfg.policy},
      {"split_groups", cfg.split_groups},
      {"genealogy_variance", cfg.genealogy_variance},
      {"rho", cfg.rho},
      {"xi", cfg.xi},
  };

  const int dim = result.rows.empty() ? 1 : result.rows.front().output.functional_dim;
  std::vector<const RepOutcome*> ok;
  nlohmann::ordered_json failures = nlohmann::ordered_json::array();
  for (const RepOutcome& row : result.rows) {
    if (row.failed) {
      failures.push_back({{"rep", row.rep}, {"error", row.error}});
    } else {
      ok.push_back(&row);
    }
  }
  j["reps_completed"] = ok.size();
  j["failures"] = failures;
  j["complete"] = failures.empty();

  const auto mean_of = [&](const auto& get) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (int c = 0; c < dim; ++c) {
      NeumaierSum acc;
      std::size_t n = 0;
      for (const RepOutcome* row : ok) {
        const double v = get(*row, c);
        if (std::isnan(v)) continue;
        acc.add(v);
        ++n;
      }
      if (n == 0) {
        arr.push_back(nullptr);
      } else {
        arr.push_back(acc.value() / static_cast<double>(n));
      }
    }
    return arr;
  };

  if (result.truth.has_value()) {
    nlohmann::ordered_json truth = nlohmann::ordered_json::array();
    for (int c = 0; c < dim; ++c) truth.push_back((*result.truth)[static_cast<std::size_t>(c)]);
    j["truth"] = truth;
  } else {
    j["truth"] = nullptr;
  }

  j["estimate_mean"] = mean_of(
      [](const RepOutcome& row, int c) { return row.output.estimate[static_cast<std::size_t>(c)]; });
  {
    nlohmann::ordered_json sd = nlohmann::ordered_json::array();
    for (int c = 0; c < dim; ++c) {
      std::vector<double> xs;
      for (const RepOutcome* row : ok) {
        const double v = row->output.estimate[static_cast<std::size_t>(c)];
        if (!std::isnan(v)) xs.push_back(v);
      }
      if (xs.size() < 2) {
        sd.push_back(nullptr);
        continue;
      }
      NeumaierSum m_acc;
      for (double x : xs) m_acc.add(x);
      const double mean = m_acc.value() / static_cast<double>(xs.size());
      NeumaierSum ss;
      for (double x : xs) ss.add((x - mean) * (x - mean));
      sd.push_back(std::sqrt(ss.value() / static_cast<double>(xs.size() - 1)));
    }
    j["estimate_sd"] = sd;
  }

  j["se_mean"] = {
      {"ancestral", mean_of([](const RepOutcome& row, int c) {
         return detail::opt_or_nan(row.output.se(row.output.var_ancestral, c));
       })},
      {"split", mean_of([](const RepOutcome& row, int c) {
         return detail::opt_or_nan(row.output.se(row.output.var_split, c));
       })},
      {"genealogy", mean_of([](const RepOutcome& row, int c) {
         return detail::opt_or_nan(row.output.se(row.output.var_genealogy, c));
       })},
  };

  if (result.truth.has_value() && !ok.empty()) {
    const auto coverage = [&](const char* family, double z) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (int c = 0; c < dim; ++c) {
        std::size_t hit = 0;
        std::size_t n = 0;
        for (const RepOutcome* row : ok) {
          const FilterOutput& o = row->output;
          const std::array<std::optional<double>, 2>& var =
              family == std::string("ancestral")
                  ? o.var_ancestral
                  : (family == std::string("split") ? o.var_split : o.var_genealogy);
          const std::optional<double> se = o.se(var, c);
          if (!se.has_value() || std::isnan(*se)) continue;
          ++n;
          const double err =
              std::abs(o.estimate[static_cast<std::size_t>(c)] -
                       (*result.truth)[static_cast<std::size_t>(c)]);
          if (err <= z * *se) ++hit;
        }
        if (n == 0) {
          arr.push_back(nullptr);
        } else {
          arr.push_back(static_cast<double>(hit) / static_cast<double>(n));
        }
      }
      return arr;
    };
    j["coverage"] = {
        {"ancestral_1se", coverage("ancestral", 1.0)},
        {"ancestral_2se", coverage("ancestral", 2.0)},
        {"split_1se", coverage("split", 1.0)},
        {"split_2se", coverage("split", 2.0)},
        {"genealogy_1se", coverage("genealogy", 1.0)},
        {"genealogy_2se", coverage("genealogy", 2.0)},
    };
  }

  {
    NeumaierSum events;
    NeumaierSum wall;
    for (const RepOutcome* row : ok) {
      events.add(static_cast<double>(row->resample_events));
      wall.add(row->output.diag.wall_ms);
    }
    j["resample_events_mean"] =
        ok.empty() ? nlohmann::ordered_json(nullptr)
                   : nlohmann::ordered_json(events.value() / static_cast<double>(ok.size()));
    j["wall_ms_total"] = wall.value();
  }
  return j;
}

/// Builds the data set, runs all replications, and renders the reports.
/// Writes them to config.out_csv / config.out_json when those are set.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult result;
  result.config = cfg;
  if (cfg.reps < 1) {
    throw InvalidConfigError("need at least one replication");
  }

  const auto load_column = [&](const std::string& name) {
    const SeriesTable table = load_series_csv(cfg.data_file);
    for (std::size_t j = 0; j < table.names.size(); ++j) {
      if (table.names[j] == name) return table.columns[j];
    }
    throw InvalidConfigError("data file has no column named " + name + ": " + cfg.data_file);
  };

  if (cfg.model == "changepoint") {
    std::vector<double> y = cfg.data_file.empty()
                                ? simulate_changepoint(cfg.horizon, cfg.rho, cfg.xi,
                                                       cfg.data_seed)
                                      .observations
                                : load_column("y");
    result.config.horizon = static_cast<int>(y.size());
    const std::vector<double> exact =
        changepoint_exact_posterior_mean(y, cfg.rho, cfg.xi);
    result.truth = std::array<double, 2>{exact.back(), 0.0};
    const ChangePointModel model(std::move(y), cfg.rho, cfg.xi);
    detail::run_replications(model, result.config, result.rows);
  } else if (cfg.model == "bearings" || cfg.model == "bearings-prior") {
    std::vector<double> y = cfg.data_file.empty()
                                ? simulate_bearings(cfg.horizon, cfg.data_seed).observations
                                : load_column("y");
    result.config.horizon = static_cast<int>(y.size());
    const BearingsModel model(std::move(y),
                              cfg.model == "bearings"
                                  ? BearingsModel::InitialProposal::kInformed
                                  : BearingsModel::InitialProposal::kPrior);
    detail::run_replications(model, result.config, result.rows);
  } else if (cfg.model == "discrete") {
    if (cfg.model_file.empty()) {
      throw InvalidConfigError("model = discrete needs model_file");
    }
    const DiscreteHMM hmm = load_discrete_hmm(cfg.model_file);
    result.config.horizon = hmm.T;
    try {
      const ExactEnumerator oracle(hmm);
      result.truth = std::array<double, 2>{oracle.psi_T(), 0.0};
    } catch (const EnumerationBudgetError&) {
      // Too large to enumerate; report without a truth column.
    }
    const DiscreteModel model(hmm);
    detail::run_replications(model, result.config, result.rows);
  } else {
    throw InvalidConfigError("unknown model: " + cfg.model);
  }

  result.csv = render_csv(result);
  result.aggregate = aggregate_json(result);

  if (!cfg.out_csv.empty()) {
    std::ofstream out(cfg.out_csv);
    if (!out) throw Error("cannot open for writing: " + cfg.out_csv);
    out << result.csv;
    if (!out) throw Error("failed while writing: " + cfg.out_csv);
  }
  if (!cfg.out_json.empty()) {
    std::ofstream out(cfg.out_json);
    if (!out) throw Error("cannot open for writing: " + cfg.out_json);
    out << result.aggregate.dump(2) << '\n';
    if (!out) throw Error("failed while writing: " + cfg.out_json);
  }
  return result;
}

}  // namespace smcse

#endif  // SMCSE_EXPERIMENT_HPP

/* Copyright 2026 The defragsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "defragsim/report.hpp"
#include "defragsim/simulation.hpp"
#include "defragsim/workload.hpp"

namespace defragsim {

struct TopologyConfig {
  int racks = 8;
  int hosts_per_rack = 4;
  int gpus_per_host = 8;
  int uplinks_per_tor = 8;
  int spines = 0;  // 0: one spine per uplink
  double nic_gbps = 400;
  double uplink_gbps = 400;

  ClusterTopology build() const {
    return ClusterTopology::make_two_tier(racks, hosts_per_rack, gpus_per_host, uplinks_per_tor,
                                          nic_gbps * kGbps, uplink_gbps * kGbps,
                                          spines > 0 ? spines : uplinks_per_tor);
  }
  double oversubscription() const {
    return hosts_per_rack * gpus_per_host * nic_gbps / (uplinks_per_tor * uplink_gbps);
  }
};

struct TraceConfig {
  std::vector<double> loads = {0.9};
  int num_jobs = 100;
  int seeds = 1;
  std::uint64_t base_seed = 1;
};

struct SweepConfig {
  std::vector<double> loads;
  std::vector<double> oversubscription;
  std::vector<int> thresholds;
};

struct ExperimentConfig {
  std::string name = "experiment";
  TopologyConfig topology;
  WorkloadMenu menu;
  double compute_scale = 1.0;
  TraceConfig trace;
  std::vector<std::string> algorithms = {"monkeytree"};
  int threshold = 0;
  SolverOptions solver;
  SimConfig simulation;
  SweepConfig sweep;
  std::string output = "results";
  int workers = 1;

  /// Menu with compute_scale applied.
  WorkloadMenu effective_menu() const {
    WorkloadMenu m = menu;
    for (auto& model : m.models) model.replica_compute_seconds *= compute_scale;
    return m;
  }
  /// Largest ring multiplicity any generated job can have.
  int max_rings() const {
    int d = 1;
    for (const auto& m : menu.models)
      if (m.allow_tp)
        for (int tp : menu.tp_degrees) d = std::max(d, tp);
    return d;
  }
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Simulation of one trace under one algorithm.
RunResult run_single(const ExperimentConfig& config, const std::string& algorithm,
                     const std::vector<JobSpec>& jobs);

struct CellKey {
  std::string algorithm;
  double load = 0;
  std::uint64_t seed = 0;
};

struct ExperimentResult {
  std::vector<CellKey> keys;
  std::vector<RunResult> runs;
  nlohmann::json summary;
};

/// Every (load, seed, algorithm) run of the config. Writes result files when
/// `out` is set.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::optional<std::filesystem::path>& out);

enum class SweepAxis { kLoad, kOversubscription, kLambda };
SweepAxis sweep_axis_from_name(const std::string& name);

struct SweepCell {
  std::string label;
  ExperimentConfig config;
};

/// One config per axis value, each otherwise identical to the base.
std::vector<SweepCell> sweep_cells(const ExperimentConfig& base, SweepAxis axis);

nlohmann::json run_sweep(const ExperimentConfig& base, SweepAxis axis,
                         const std::optional<std::filesystem::path>& out);

// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read(const nlohmann::json& obj, const char* key, T& into, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline ModelTemplate model_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    for (const auto& m : default_model_menu())
      if (m.name == j.get<std::string>()) return m;
    throw ConfigError("workload.models: unknown model '" + j.get<std::string>() + "'");
  }
  reject_unknown(j, {"name", "parameter_gb", "dp", "fsdp", "tp", "pp", "replica_compute_seconds",
                     "pp_boundary_gb"},
                 "workload.models[]");
  ModelTemplate m;
  double params = 0, pp_gb = 0;
  const std::string w = "workload.models[]";
  read(j, "name", m.name, w);
  read(j, "parameter_gb", params, w);
  read(j, "dp", m.allow_dp, w);
  read(j, "fsdp", m.allow_fsdp, w);
  read(j, "tp", m.allow_tp, w);
  read(j, "pp", m.allow_pp, w);
  read(j, "replica_compute_seconds", m.replica_compute_seconds, w);
  read(j, "pp_boundary_gb", pp_gb, w);
  m.parameter_bytes = params * kGB;
  m.pp_boundary_bytes = pp_gb * kGB;
  m.validate();
  return m;
}

inline std::string load_label(double load) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "load-%g", load);
  return buf;
}

/// Write-then-rename so readers never see a partial file.
inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

template <typename Fn>
std::string render(Fn&& fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::read;
  using detail::reject_unknown;
  ExperimentConfig c;
  reject_unknown(j, {"name", "topology", "workload", "trace", "algorithms", "controller",
                     "simulation", "sweep", "output", "workers"},
                 "config");
  read(j, "name", c.name, "config");
  read(j, "output", c.output, "config");
  read(j, "workers", c.workers, "config");
  read(j, "algorithms", c.algorithms, "config");

  if (j.contains("topology")) {
    const auto& t = j.at("topology");
    const std::string w = "topology";
    reject_unknown(t, {"racks", "hosts_per_rack", "gpus_per_host", "uplinks_per_tor", "spines",
                       "nic_gbps", "uplink_gbps"},
                   w);
    read(t, "racks", c.topology.racks, w);
    read(t, "hosts_per_rack", c.topology.hosts_per_rack, w);
    read(t, "gpus_per_host", c.topology.gpus_per_host, w);
    read(t, "uplinks_per_tor", c.topology.uplinks_per_tor, w);
    read(t, "spines", c.topology.spines, w);
    read(t, "nic_gbps", c.topology.nic_gbps, w);
    read(t, "uplink_gbps", c.topology.uplink_gbps, w);
  }
  if (j.contains("workload")) {
    const auto& wl = j.at("workload");
    const std::string w = "workload";
    reject_unknown(wl, {"models", "job_gpus", "iterations", "tp_degrees", "pp_degrees",
                        "compute_scale"},
                   w);
    if (wl.contains("models")) {
      if (!wl.at("models").is_array()) throw ConfigError("workload.models: expected an array");
      c.menu.models.clear();
      for (const auto& m : wl.at("models")) c.menu.models.push_back(detail::model_from_json(m));
    }
    read(wl, "job_gpus", c.menu.job_gpus, w);
    read(wl, "iterations", c.menu.iterations, w);
    read(wl, "tp_degrees", c.menu.tp_degrees, w);
    read(wl, "pp_degrees", c.menu.pp_degrees, w);
    read(wl, "compute_scale", c.compute_scale, w);
  }
  if (j.contains("trace")) {
    const auto& t = j.at("trace");
    const std::string w = "trace";
    reject_unknown(t, {"loads", "num_jobs", "seeds", "base_seed"}, w);
    read(t, "loads", c.trace.loads, w);
    read(t, "num_jobs", c.trace.num_jobs, w);
    read(t, "seeds", c.trace.seeds, w);
    read(t, "base_seed", c.trace.base_seed, w);
  }
  if (j.contains("controller")) {
    const auto& t = j.at("controller");
    const std::string w = "controller";
    reject_unknown(t, {"threshold", "solver_time_limit", "node_limit", "warm_start"}, w);
    read(t, "threshold", c.threshold, w);
    read(t, "solver_time_limit", c.solver.time_limit_seconds, w);
    read(t, "node_limit", c.solver.node_limit, w);
    read(t, "warm_start", c.solver.warm_start, w);
  }
  if (j.contains("simulation")) {
    const auto& t = j.at("simulation");
    const std::string w = "simulation";
    reject_unknown(t, {"reinit_seconds", "optimizer_multiplier", "sglb_epoch_seconds",
                       "sglb_hysteresis", "check_conservation", "check_isolation", "event_log"},
                   w);
    read(t, "reinit_seconds", c.simulation.reinit_seconds, w);
    read(t, "optimizer_multiplier", c.simulation.optimizer_multiplier, w);
    read(t, "sglb_epoch_seconds", c.simulation.sglb_epoch_seconds, w);
    read(t, "sglb_hysteresis", c.simulation.sglb_hysteresis, w);
    read(t, "check_conservation", c.simulation.check_conservation, w);
    read(t, "check_isolation", c.simulation.check_isolation, w);
    read(t, "event_log", c.simulation.keep_event_log, w);
  }
  if (j.contains("sweep")) {
    const auto& t = j.at("sweep");
    const std::string w = "sweep";
    reject_unknown(t, {"loads", "oversubscription", "thresholds"}, w);
    read(t, "loads", c.sweep.loads, w);
    read(t, "oversubscription", c.sweep.oversubscription, w);
    read(t, "thresholds", c.sweep.thresholds, w);
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline void ExperimentConfig::validate() const {
  const auto topo = topology.build();
  if (!(compute_scale >= 0)) throw ConfigError("workload.compute_scale must be >= 0");
  detail::validate_menu(effective_menu(), topo);
  expected_gpu_seconds(effective_menu(), topo);
  if (trace.loads.empty()) throw ConfigError("trace.loads: empty");
  for (double l : trace.loads)
    if (!(l > 0) || l > 1) throw ConfigError("trace.loads: values must be in (0, 1]");
  if (trace.num_jobs < 0) throw ConfigError("trace.num_jobs must be >= 0");
  if (trace.seeds < 1) throw ConfigError("trace.seeds must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (algorithms.empty()) throw ConfigError("algorithms: empty");
  const int lambda = threshold > 0 ? threshold : topology.uplinks_per_tor;
  if (threshold < 0) throw ConfigError("controller.threshold must be >= 0");
  for (const auto& name : algorithms) {
    const auto alg = algorithm_from_name(name);
    if (alg.migration && lambda < 2 * max_rings())
      throw ConfigError("controller.threshold " + std::to_string(lambda) +
                        " is below 2 x max rings per job (" + std::to_string(2 * max_rings()) +
                        "); defragmentation may be infeasible");
    if (alg.routing == RoutingScheme::kSpray && !topo.full_bisection())
      throw ConfigError("algorithm spray requires a full-bisection topology");
  }
  if (!(solver.time_limit_seconds > 0)) throw ConfigError("controller.solver_time_limit must be > 0");
  if (solver.node_limit < 1) throw ConfigError("controller.node_limit must be >= 1");
  if (!(simulation.reinit_seconds >= 0)) throw ConfigError("simulation.reinit_seconds must be >= 0");
  if (!(simulation.optimizer_multiplier >= 0))
    throw ConfigError("simulation.optimizer_multiplier must be >= 0");
  if (!(simulation.sglb_epoch_seconds > 0))
    throw ConfigError("simulation.sglb_epoch_seconds must be > 0");
  if (!(simulation.sglb_hysteresis >= 1)) throw ConfigError("simulation.sglb_hysteresis must be >= 1");
  for (double l : sweep.loads)
    if (!(l > 0) || l > 1) throw ConfigError("sweep.loads: values must be in (0, 1]");
  for (double r : sweep.oversubscription)
    if (!(r > 0)) throw ConfigError("sweep.oversubscription: values must be > 0");
  for (int t : sweep.thresholds)
    if (t < 1) throw ConfigError("sweep.thresholds: values must be >= 1");
}

inline RunResult run_single(const ExperimentConfig& config, const std::string& algorithm,
                            const std::vector<JobSpec>& jobs) {
  const auto topo = config.topology.build();
  ControllerConfig cc;
  cc.threshold = config.threshold;
  cc.algorithm = algorithm_from_name(algorithm);
  cc.solver = config.solver;
  return simulate(topo, cc, config.simulation, jobs);
}

inline ExperimentResult run_experiment(const ExperimentConfig& config,
                                       const std::optional<std::filesystem::path>& out) {
  config.validate();
  const auto topo = config.topology.build();
  const auto menu = config.effective_menu();

  std::vector<Trace> traces;
  ExperimentResult result;
  for (double load : config.trace.loads)
    for (int s = 0; s < config.trace.seeds; ++s) {
      const std::uint64_t seed = config.trace.base_seed + static_cast<std::uint64_t>(s);
      traces.push_back(generate_trace(menu, topo, load, seed, config.trace.num_jobs));
      for (const auto& alg : config.algorithms) result.keys.push_back({alg, load, seed});
    }

  const std::size_t per_trace = config.algorithms.size();
  result.runs.resize(result.keys.size());
  std::size_t next = 0;
  while (next < result.keys.size()) {
    std::vector<std::future<RunResult>> batch;
    const std::size_t first = next;
    for (; next < result.keys.size() && batch.size() < static_cast<std::size_t>(config.workers);
         ++next) {
      const auto& trace = traces[next / per_trace];
      const auto& alg = result.keys[next].algorithm;
      batch.push_back(std::async(config.workers > 1 ? std::launch::async : std::launch::deferred,
                                 [&config, &alg, &trace] { return run_single(config, alg, trace.jobs); }));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) result.runs[first + i] = batch[i].get();
  }

  // Aggregates pool every seed of an (algorithm, load) pair.
  nlohmann::json cells = nlohmann::json::array();
  std::map<std::pair<std::string, double>, std::vector<std::size_t>> pooled;
  for (std::size_t i = 0; i < result.keys.size(); ++i) {
    const auto& k = result.keys[i];
    auto s = run_summary(result.runs[i]);
    s["algorithm"] = k.algorithm;
    s["load"] = k.load;
    s["seed"] = k.seed;
    cells.push_back(std::move(s));
    pooled[{k.algorithm, k.load}].push_back(i);
  }
  nlohmann::json aggregate = nlohmann::json::array();
  for (const auto& [key, idx] : pooled) {
    std::vector<double> sd;
    long migrations = 0, events = 0, moves = 0;
    for (auto i : idx) {
      const auto v = slowdowns_of(result.runs[i]);
      sd.insert(sd.end(), v.begin(), v.end());
      migrations += static_cast<long>(result.runs[i].migrations.size());
      events += static_cast<long>(result.runs[i].solves.size());
      for (const auto& r : result.runs[i].solves) moves += r.move_count;
    }
    const auto s = summarize_slowdowns(sd);
    aggregate.push_back({{"algorithm", key.first},
                         {"load", key.second},
                         {"jobs", s.jobs},
                         {"mean_slowdown", s.mean},
                         {"p50_slowdown", s.p50},
                         {"p90_slowdown", s.p90},
                         {"p99_slowdown", s.p99},
                         {"max_slowdown", s.max},
                         {"defrag_events", events},
                         {"total_moves", moves},
                         {"job_migrations", migrations}});
  }
  result.summary = {{"name", config.name},
                    {"oversubscription", config.topology.oversubscription()},
                    {"threshold", config.threshold > 0 ? config.threshold
                                                       : config.topology.uplinks_per_tor},
                    {"runs", cells},
                    {"aggregate", aggregate}};

  if (out) {
    for (std::size_t t = 0; t < traces.size(); ++t) {
      const auto& key = result.keys[t * per_trace];
      const auto dir = *out / detail::load_label(key.load) / ("seed-" + std::to_string(key.seed));
      detail::write_file(dir / "trace.jsonl",
                         detail::render([&](std::ostream& o) { write_trace(o, traces[t]); }));
    }
    for (std::size_t i = 0; i < result.keys.size(); ++i) {
      const auto& k = result.keys[i];
      const auto& run = result.runs[i];
      const auto dir = *out / detail::load_label(k.load) / ("seed-" + std::to_string(k.seed)) /
                       k.algorithm;
      detail::write_file(dir / "jobs.csv", detail::render([&](std::ostream& o) { write_jobs_csv(o, run); }));
      detail::write_file(dir / "series.csv", detail::render([&](std::ostream& o) { write_series_csv(o, run); }));
      detail::write_file(dir / "solver.csv", detail::render([&](std::ostream& o) { write_solver_csv(o, run); }));
      detail::write_file(dir / "solver_timing.csv",
                         detail::render([&](std::ostream& o) { write_solver_timing_csv(o, run); }));
      detail::write_file(dir / "migrations.csv",
                         detail::render([&](std::ostream& o) { write_migrations_csv(o, run); }));
      detail::write_file(dir / "summary.json", result.summary["runs"][i].dump(2) + "\n");
      if (config.simulation.keep_event_log)
        detail::write_file(dir / "events.log", detail::render([&](std::ostream& o) {
                             for (const auto& line : run.event_log) o << line << '\n';
                           }));
    }
    detail::write_file(*out / "summary.json", result.summary.dump(2) + "\n");
  }
  return result;
}

inline SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "load") return SweepAxis::kLoad;
  if (name == "oversubscription") return SweepAxis::kOversubscription;
  if (name == "lambda" || name == "threshold") return SweepAxis::kLambda;
  throw ConfigError("unknown sweep axis '" + name + "'");
}

inline std::vector<SweepCell> sweep_cells(const ExperimentConfig& base, SweepAxis axis) {
  std::vector<SweepCell> cells;
  char buf[48];
  switch (axis) {
    case SweepAxis::kLoad:
      for (double l : base.sweep.loads.empty() ? base.trace.loads : base.sweep.loads) {
        ExperimentConfig c = base;
        c.trace.loads = {l};
        cells.push_back({detail::load_label(l), c});
      }
      break;
    case SweepAxis::kOversubscription:
      if (base.sweep.oversubscription.empty()) throw ConfigError("sweep.oversubscription: empty");
      for (double r : base.sweep.oversubscription) {
        const auto& t = base.topology;
        const double uplinks = t.hosts_per_rack * t.gpus_per_host * t.nic_gbps / (r * t.uplink_gbps);
        const long rounded = std::lround(uplinks);
        if (rounded < 1 || std::abs(uplinks - rounded) > 1e-9 * uplinks)
          throw ConfigError("sweep.oversubscription: ratio " + std::to_string(r) +
                            " needs a non-integer uplink count");
        ExperimentConfig c = base;
        c.topology.uplinks_per_tor = static_cast<int>(rounded);
        c.topology.spines = 0;
        c.algorithms.clear();
        for (const auto& a : base.algorithms)
          if (algorithm_from_name(a).routing != RoutingScheme::kSpray ||
              c.topology.build().full_bisection())
            c.algorithms.push_back(a);
        if (c.algorithms.empty()) continue;
        std::snprintf(buf, sizeof buf, "oversub-%g", r);
        cells.push_back({buf, c});
      }
      break;
    case SweepAxis::kLambda:
      if (base.sweep.thresholds.empty()) throw ConfigError("sweep.thresholds: empty");
      for (int t : base.sweep.thresholds) {
        ExperimentConfig c = base;
        c.threshold = t;
        std::snprintf(buf, sizeof buf, "lambda-%d", t);
        cells.push_back({buf, c});
      }
      break;
  }
  for (const auto& cell : cells) cell.config.validate();
  return cells;
}

inline nlohmann::json run_sweep(const ExperimentConfig& base, SweepAxis axis,
                                const std::optional<std::filesystem::path>& out) {
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& cell : sweep_cells(base, axis)) {
    std::optional<std::filesystem::path> dir;
    if (out) dir = *out / cell.label;
    auto r = run_experiment(cell.config, dir);
    grid.push_back({{"cell", cell.label}, {"summary", r.summary}});
  }
  if (out) detail::write_file(*out / "sweep.json", grid.dump(2) + "\n");
  return grid;
}

}  // namespace defragsim

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

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "defragsim/experiment.hpp"
#include "defragsim/solver.hpp"

namespace ds = defragsim;

namespace {

constexpr int kConfigExit = 2;
constexpr int kInvariantExit = 3;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void print_aggregate(const nlohmann::json& summary) {
  for (const auto& a : summary.at("aggregate"))
    std::printf("%-16s load=%-5g jobs=%-5d mean=%.4f p90=%.4f p99=%.4f events=%ld migrations=%ld\n",
                a.at("algorithm").get<std::string>().c_str(), a.at("load").get<double>(),
                a.at("jobs").get<int>(), a.at("mean_slowdown").get<double>(),
                a.at("p90_slowdown").get<double>(), a.at("p99_slowdown").get<double>(),
                a.at("defrag_events").get<long>(), a.at("job_migrations").get<long>());
}

int oracle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ds::ConfigError("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ds::ConfigError(path + ": " + e.what());
  }
  const auto instance = ds::instance_from_json(j);
  const auto plan = ds::solve(instance, {});
  std::optional<int> exact;
  try {
    exact = ds::brute_force_min_moves(instance);
  } catch (const std::length_error& e) {
    throw ds::ConfigError(std::string("oracle: ") + e.what());
  }
  const char* status = plan.status == ds::SolveStatus::kOptimal    ? "optimal"
                       : plan.status == ds::SolveStatus::kFeasible ? "feasible"
                                                                   : "infeasible";
  std::printf("solver: %s moves=%d nodes=%ld\n", status, plan.move_count, plan.stats.nodes_explored);
  if (exact)
    std::printf("oracle: moves=%d\n", *exact);
  else
    std::printf("oracle: infeasible\n");
  const bool agree = exact ? plan.status != ds::SolveStatus::kInfeasible && plan.move_count == *exact
                           : plan.status == ds::SolveStatus::kInfeasible;
  std::printf("%s\n", agree ? "agree" : "DISAGREE");
  if (!agree) throw ds::InvariantViolation("solver and oracle disagree");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-level simulator and defragmentation controller for GPU clusters"};
  app.require_subcommand(1);

  std::string config_path, algorithms, out_dir, axis, instance_path;
  int seeds = 0, workers = 0;

  auto* run = app.add_subcommand("run", "Run every (algorithm, load, seed) of a config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--algorithms", algorithms, "Comma-separated algorithm list");
  run->add_option("--seeds", seeds, "Seeds per load");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--workers", workers, "Parallel runs");

  auto* sweep = app.add_subcommand("sweep", "Grid over one axis");
  sweep->add_option("config", config_path, "Experiment config (JSON)")->required();
  sweep->add_option("--axis", axis, "load | oversubscription | lambda")->required();
  sweep->add_option("--algorithms", algorithms, "Comma-separated algorithm list");
  sweep->add_option("--seeds", seeds, "Seeds per load");
  sweep->add_option("--out", out_dir, "Output directory");
  sweep->add_option("--workers", workers, "Parallel runs");

  auto* validate = app.add_subcommand("validate", "Check a config and exit");
  validate->add_option("config", config_path, "Experiment config (JSON)")->required();

  auto* orc = app.add_subcommand("oracle", "Compare the solver with exhaustive search");
  orc->add_option("instance", instance_path, "Solver instance (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (orc->parsed()) return oracle(instance_path);

    auto config = ds::load_config(config_path);
    if (!algorithms.empty()) config.algorithms = split_list(algorithms);
    if (seeds > 0) config.trace.seeds = seeds;
    if (workers > 0) config.workers = workers;
    if (!out_dir.empty()) config.output = out_dir;
    config.validate();

    if (validate->parsed()) {
      const auto topo = config.topology.build();
      std::printf("ok: %s, %d GPUs, %d racks, oversubscription %g, %zu algorithm(s)\n",
                  config.name.c_str(), topo.total_gpus(), topo.num_racks(),
                  config.topology.oversubscription(), config.algorithms.size());
      return 0;
    }
    if (run->parsed()) {
      const auto r = ds::run_experiment(config, std::filesystem::path(config.output));
      print_aggregate(r.summary);
      return 0;
    }
    const auto grid = ds::run_sweep(config, ds::sweep_axis_from_name(axis),
                                    std::filesystem::path(config.output));
    for (const auto& cell : grid) {
      std::printf("[%s]\n", cell.at("cell").get<std::string>().c_str());
      print_aggregate(cell.at("summary"));
    }
    return 0;
  } catch (const ds::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigExit;
  } catch (const ds::InvariantViolation& e) {
    std::fprintf(stderr, "invariant violation: %s\n", e.what());
    return kInvariantExit;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInvariantExit;
  }
}

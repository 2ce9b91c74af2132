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

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "defragsim/fragmentation.hpp"
#include "defragsim/placement.hpp"
#include "defragsim/routing.hpp"
#include "defragsim/scheduler.hpp"
#include "defragsim/solver.hpp"
#include "defragsim/workload.hpp"

namespace defragsim {

struct ControllerConfig {
  int threshold = 0;  // lambda; 0 means "uplinks per ToR"
  Algorithm algorithm = algorithm_from_name("monkeytree");
  SolverOptions solver;
};

/// A solver instance over a subset of units, everything else frozen.
struct InstanceBuild {
  SolverInstance instance;
  std::vector<UnitKey> units;  // parallel to instance.jobs
};

/// Movable units are those of jobs outside `frozen`, restricted to fragmented
/// units when `fragmented_only` is set.
inline InstanceBuild build_instance(const Placement& placement, int threshold,
                                   const std::set<JobId>& frozen, bool fragmented_only) {
  const auto& topo = placement.topology();
  InstanceBuild out;
  auto& inst = out.instance;
  inst.racks = topo.num_racks();
  inst.rack_capacity = topo.hosts_per_rack();
  inst.threshold = threshold;
  inst.reserved.assign(inst.racks, 0);
  inst.fixed_degree.assign(inst.racks, 0);
  for (const auto& unit : placement.units()) {
    const auto& counts = placement.rack_counts(unit);
    const int rings = placement.rings(unit.job);
    const bool frag = placement.fragmented(unit);
    if (frozen.contains(unit.job) || (fragmented_only && !frag)) {
      for (int t = 0; t < inst.racks; ++t) {
        inst.reserved[t] += counts[t];
        if (frag && counts[t] > 0) inst.fixed_degree[t] += rings;
      }
      continue;
    }
    SolverJob job;
    job.id = unit.job;
    job.stage = unit.stage;
    job.size = static_cast<int>(placement.hosts_of(unit).size());
    job.rings = rings;
    job.initial = counts;
    inst.jobs.push_back(std::move(job));
    out.units.push_back(unit);
  }
  return out;
}

/// Turns rack-level deltas into host moves. Departing workers leave from
/// their highest-numbered hosts; arrivals fill the target rack's free hosts in
/// index order, then hosts vacated by the same plan.
inline std::vector<HostMove> resolve_host_moves(const Placement& placement, const InstanceBuild& build,
                                                const RackMatrix& target) {
  const auto& topo = placement.topology();
  const int racks = topo.num_racks();
  std::vector<std::vector<int>> vacated(racks);
  std::vector<std::vector<int>> leaving(build.units.size());
  for (std::size_t s = 0; s < build.units.size(); ++s) {
    const auto& initial = build.instance.jobs[s].initial;
    std::vector<int> hosts = placement.hosts_of(build.units[s]);
    std::sort(hosts.rbegin(), hosts.rend());
    for (int t = 0; t < racks; ++t) {
      int surplus = initial[t] - target[s][t];
      for (int h : hosts) {
        if (surplus <= 0) break;
        if (topo.rack_of_host(h) != t) continue;
        leaving[s].push_back(h);
        vacated[t].push_back(h);
        --surplus;
      }
    }
  }
  std::vector<std::vector<int>> pool(racks);
  for (int t = 0; t < racks; ++t) {
    pool[t] = placement.free_hosts_of_rack(t);
    std::sort(vacated[t].begin(), vacated[t].end());
    pool[t].insert(pool[t].end(), vacated[t].begin(), vacated[t].end());
  }
  std::vector<std::size_t> cursor(racks, 0);
  std::vector<HostMove> moves;
  for (std::size_t s = 0; s < build.units.size(); ++s) {
    const auto& initial = build.instance.jobs[s].initial;
    std::size_t next_leaving = 0;
    for (int t = 0; t < racks; ++t) {
      for (int n = target[s][t] - initial[t]; n > 0; --n) {
        check_invariant(cursor[t] < pool[t].size(), "host resolution ran out of slots");
        check_invariant(next_leaving < leaving[s].size(), "host resolution lost a worker");
        moves.push_back({build.units[s], leaving[s][next_leaving++], pool[t][cursor[t]++]});
      }
    }
    check_invariant(next_leaving == leaving[s].size(), "host resolution left a worker behind");
  }
  return moves;
}

struct DefragOutcome {
  JobId trigger = 0;
  MigrationPlan plan;
  std::vector<HostMove> host_moves;
  std::set<JobId> moved_jobs;
  int movable_units = 0;
  bool widened = false;  // first attempt with fragmented units only failed
  std::string diagnostic;
};

struct ControllerActions {
  std::vector<JobSpec> admitted;
  std::vector<DefragOutcome> defrags;
};

/// Observes scheduler placements, triggers the solver on threshold
/// violations, applies plans to the logical placement, and keeps the routing
/// table current for the logical placement.
class Controller {
 public:
  Controller(const ClusterTopology& topology, ControllerConfig config)
      : topology_(&topology), config_(std::move(config)), placement_(topology) {
    if (config_.threshold <= 0) config_.threshold = topology.uplinks_per_tor();
    if (config_.algorithm.routing == RoutingScheme::kSpray && !topology.full_bisection())
      throw ConfigError("spray routing requires a full-bisection topology");
  }

  const ControllerConfig& config() const { return config_; }
  const Placement& placement() const { return placement_; }
  const Scheduler& scheduler() const { return scheduler_; }
  const RoutingTable& routing() const { return routing_; }
  const JobSpec& spec(JobId job) const { return specs_.at(job); }
  bool in_flight(JobId job) const { return in_flight_.contains(job); }

  void job_started(JobId job) { started_.insert(job); }
  void migration_finished(JobId job) { in_flight_.erase(job); }

  ControllerActions on_job_arrival(const JobSpec& job) {
    ControllerActions actions;
    if (scheduler_.place_job(placement_, job)) admit(job, actions);
    refresh_routing();
    return actions;
  }

  /// Departures never plan migrations, but jobs they admit go through the
  /// arrival path.
  ControllerActions on_job_departure(JobId job) {
    check_invariant(!in_flight_.contains(job), "departing job is mid-migration");
    ControllerActions actions;
    started_.erase(job);
    specs_.erase(job);
    for (const auto& next : scheduler_.release_job(placement_, job)) admit(next, actions);
    refresh_routing();
    return actions;
  }

  /// DP demands of every placed job under the logical placement.
  std::vector<DpDemand> demands() const {
    std::vector<DpDemand> out;
    for (const auto& [id, job] : specs_) {
      const double util = job.compute_seconds / ideal_iteration_seconds(job, *topology_);
      for (const auto& group : replica_groups(job, placement_)) {
        const auto hops = ring_traffic(group, *topology_);
        for (std::size_t i = 0; i < hops.size(); ++i)
          out.push_back({{id, group.stage, group.tp_rank, static_cast<int>(i)},
                         hops[i].src_rack,
                         hops[i].dst_rack,
                         hops[i].src_gpu,
                         hops[i].dst_gpu,
                         util});
      }
    }
    return out;
  }

 private:
  void admit(const JobSpec& job, ControllerActions& actions) {
    specs_[job.id] = job;
    actions.admitted.push_back(job);
    if (!config_.algorithm.migration) return;
    if (auto outcome = defragment(job.id)) actions.defrags.push_back(std::move(*outcome));
  }

  std::optional<DefragOutcome> defragment(JobId trigger) {
    const auto report = fragmentation_degree(placement_);
    if (threshold_violated(report, config_.threshold).empty()) return std::nullopt;
    DefragOutcome out;
    out.trigger = trigger;
    InstanceBuild build;
    for (bool fragmented_only : {true, false}) {
      build = build_instance(placement_, config_.threshold, in_flight_, fragmented_only);
      out.plan = solve(build.instance, config_.solver);
      out.movable_units = static_cast<int>(build.units.size());
      if (out.plan.status != SolveStatus::kInfeasible) break;
      out.widened = true;
    }
    if (out.plan.status == SolveStatus::kInfeasible) {
      out.diagnostic = "no compliant placement reachable without moving in-flight jobs";
      return out;
    }
    out.host_moves = resolve_host_moves(placement_, build, out.plan.target);
    placement_.apply_moves(out.host_moves);
    for (const auto& m : out.host_moves) {
      out.moved_jobs.insert(m.unit.job);
      if (started_.contains(m.unit.job)) in_flight_.insert(m.unit.job);
    }
    check_invariant(threshold_violated(fragmentation_degree(placement_), config_.threshold).empty(),
                    "plan left a rack over threshold");
    return out;
  }

  void refresh_routing() {
    const auto d = demands();
    const int racks = topology_->num_racks(), uplinks = topology_->uplinks_per_tor();
    switch (config_.algorithm.routing) {
      case RoutingScheme::kPerfect:
        routing_ = perfect_route(d, racks, uplinks);
        break;
      case RoutingScheme::kCrux:
        routing_ = crux_route(d, racks, uplinks);
        break;
      case RoutingScheme::kEcmp:
      case RoutingScheme::kSglb:
        routing_ = ecmp_route(d, uplinks);
        break;
      case RoutingScheme::kSpray:
        routing_.clear();
        break;
    }
  }

  const ClusterTopology* topology_;
  ControllerConfig config_;
  Placement placement_;
  Scheduler scheduler_;
  RoutingTable routing_;
  std::map<JobId, JobSpec> specs_;
  std::set<JobId> started_;
  std::set<JobId> in_flight_;
};

}  // namespace defragsim

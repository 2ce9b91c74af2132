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

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "defragsim/controller.hpp"
#include "defragsim/flowsim.hpp"

namespace defragsim {

struct SimConfig {
  double reinit_seconds = 10.0;
  double optimizer_multiplier = 3.0;
  double sglb_epoch_seconds = 0.1;
  double sglb_hysteresis = 1.2;
  bool check_conservation = true;
  bool check_isolation = true;
  bool keep_event_log = false;
};

struct JobRecord {
  JobId id = 0;
  std::string model;
  int gpus = 0;
  int hosts = 0;
  int tp = 1;
  int pp = 1;
  double arrival = 0;
  double start = 0;
  double end = 0;
  double ideal = 0;
  double slowdown = 0;
  int host_moves = 0;
  int migrations = 0;
  double downtime = 0;
};

struct SolveRecord {
  double time = 0;
  JobId trigger = 0;
  int move_count = 0;
  long nodes = 0;
  bool optimal = false;
  std::string status;
  int movable_units = 0;
  bool widened = false;
  double solve_seconds = 0;  // wall clock, not reproducible
};

struct MigrationRecord {
  JobId job = 0;
  double plan_time = 0;
  double pause_time = 0;
  double resume_time = 0;
  int host_moves = 0;
  double bytes = 0;
  double duration() const { return resume_time - plan_time; }
  double downtime() const { return resume_time - pause_time; }
};

struct SeriesRow {
  double time = 0;
  int max_degree = 0;
  double mean_degree = 0;
  int racks_over = 0;
  int fragmented_groups = 0;
  int running = 0;
  int queued = 0;
  double uplink_utilization = 0;
};

struct RunResult {
  std::vector<JobRecord> jobs;
  std::vector<SolveRecord> solves;
  std::vector<MigrationRecord> migrations;
  std::vector<SeriesRow> series;
  std::vector<std::string> diagnostics;
  std::vector<std::string> event_log;
  std::uint64_t event_hash = 0;
  long events = 0;
  long rate_recomputations = 0;
  long conservation_checks = 0;
  long conservation_failures = 0;
  long isolation_checks = 0;
  long isolation_violations = 0;
  double makespan = 0;
};

/// Event-driven run of one trace under one algorithm. Jobs execute as
/// compute / PP / DP-ring step graphs over the flow engine; the controller
/// owns the logical placement, and migrations follow a pause, transfer,
/// wait-for-destination, reinit protocol on the physical hosts.
class Simulation {
 public:
  Simulation(const ClusterTopology& topology, ControllerConfig controller, SimConfig config,
             std::vector<JobSpec> jobs)
      : topology_(&topology),
        config_(config),
        controller_(topology, std::move(controller)),
        engine_(capacities(topology)),
        mice_(topology.num_racks(), topology.uplinks_per_tor()),
        phys_(topology.total_hosts(), kNoJob) {
    for (auto& j : jobs) {
      validate_job(j, topology);
      const JobId id = j.id;
      JobState st;
      st.spec = std::move(j);
      if (!jobs_.emplace(id, std::move(st)).second)
        throw ConfigError("duplicate job id " + std::to_string(id));
    }
  }

  RunResult run();

  const Controller& controller() const { return controller_; }

 private:
  static constexpr JobId kNoJob = -1;

  enum class Phase { kPending, kQueued, kWaiting, kRunning, kMigrating, kReinit, kDone };

  struct MoveTask {
    HostMove move;
    int flows_left = 0;
    bool transferred = false;
    bool vacated = false;
    bool reached = false;
    bool vacate_early = false;
  };

  struct JobState {
    JobSpec spec;
    Phase phase = Phase::kPending;
    std::vector<std::vector<int>> hosts;  // physical, per stage
    int iteration = 0;
    bool compute_done = false;
    bool in_dp = false;
    bool local_done = true;
    int pp_left = 0;
    int dp_left = 0;
    double start = -1;
    double end = -1;
    bool pending = false;
    std::vector<MoveTask> moves;
    int unreached = 0;
    double plan_time = 0;
    double pause_time = 0;
    double downtime = 0;
    int host_moves = 0;
    int migrations = 0;
    double migration_bytes = 0;
  };

  struct DpFlowInfo {
    FlowKey key;
    int src_rack, dst_rack, src_gpu, dst_gpu;
    int uplink;
  };

  static std::vector<double> capacities(const ClusterTopology& topo) {
    std::vector<double> caps(topo.num_links());
    for (std::size_t i = 0; i < caps.size(); ++i) caps[i] = topo.capacity(topo.link_at(i));
    return caps;
  }

  RoutingScheme scheme() const { return controller_.config().algorithm.routing; }

  std::vector<int> to_indices(const std::vector<LinkId>& path) const {
    std::vector<int> out;
    out.reserve(path.size());
    for (const auto& l : path) out.push_back(static_cast<int>(topology_->link_index(l)));
    return out;
  }

  std::vector<int> path(int src_gpu, int dst_gpu, int uplink) const {
    if (scheme() == RoutingScheme::kSpray) return to_indices(topology_->spray_path(src_gpu, dst_gpu));
    return to_indices(topology_->path_between(src_gpu, dst_gpu, uplink, uplink));
  }

  std::vector<int> mice_path(int src_gpu, int dst_gpu) {
    const int src_rack = topology_->rack_of_gpu(src_gpu);
    const int uplink =
        src_rack == topology_->rack_of_gpu(dst_gpu) || scheme() == RoutingScheme::kSpray
            ? 0
            : mice_.next(src_rack);
    return path(src_gpu, dst_gpu, uplink);
  }

  int dp_uplink(const DpFlowInfo& f) {
    if (scheme() == RoutingScheme::kSglb) {
      auto it = sglb_state_.find(f.key);
      if (it != sglb_state_.end() && it->second.src_rack == f.src_rack &&
          it->second.dst_rack == f.dst_rack)
        return it->second.uplink;
      const int u = ecmp_uplink(f.key, f.src_gpu, f.dst_gpu, topology_->uplinks_per_tor());
      sglb_state_[f.key] = {f.src_rack, f.dst_rack, u};
      return u;
    }
    const auto& table = controller_.routing();
    auto it = table.find(f.key);
    if (it != table.end() && it->second.src_rack == f.src_rack && it->second.dst_rack == f.dst_rack)
      return it->second.uplink;
    return ecmp_uplink(f.key, f.src_gpu, f.dst_gpu, topology_->uplinks_per_tor());
  }

  void log(double time, EventKind kind, JobId job, std::int64_t aux) {
    hash_.add(time);
    hash_.add(static_cast<int>(kind));
    hash_.add(job);
    hash_.add(aux);
    ++result_.events;
    if (config_.keep_event_log) {
      std::ostringstream line;
      line.precision(17);
      line << time << ' ' << static_cast<int>(kind) << ' ' << job << ' ' << aux;
      result_.event_log.push_back(line.str());
    }
  }

  // Event handlers
  void on_arrival(JobId id);
  void on_flow_done(const Flow& flow);
  void on_compute_done(JobId id);
  void on_local_done(JobId id);
  void on_resume(JobId id);
  void on_rebalance();

  void process(const ControllerActions& actions);
  void try_start(JobId id);
  void start_iteration(JobState& job);
  void maybe_start_dp(JobState& job);
  void start_dp(JobState& job);
  void finish_iteration(JobState& job);
  void complete(JobState& job);

  void begin_migration(JobState& job);
  void transfer_done(JobState& job, std::size_t task);
  void try_reach(JobState& job, std::size_t task);
  void release_source(JobState& job, std::size_t task);
  void wake(int host);
  void break_cycles();

  void apply_routing();
  void schedule_rebalance();
  void after_refresh();
  void record_series();

  const ClusterTopology* topology_;
  SimConfig config_;
  Controller controller_;
  FlowEngine engine_;
  EventQueue queue_;
  MiceRouter mice_;
  std::map<JobId, JobState> jobs_;
  std::vector<JobId> phys_;
  std::map<int, std::pair<JobId, std::size_t>> source_of_;    // host -> task still holding it
  std::map<int, std::pair<JobId, std::size_t>> waiting_dst_;  // host -> task waiting for it
  std::map<std::uint64_t, DpFlowInfo> dp_flows_;
  RoutingTable sglb_state_;
  bool rebalance_pending_ = false;
  int migrating_jobs_ = 0;
  Fnv1a hash_;
  RunResult result_;
};

// ---------------------------------------------------------------------------

inline RunResult Simulation::run() {
  for (const auto& [id, job] : jobs_) queue_.push(job.spec.arrival_time, EventKind::kJobArrival, id);
  while (true) {
    if (engine_.refresh()) after_refresh();
    const double tf = engine_.next_completion();
    const double te = queue_.next_time();
    if (std::isinf(tf) && std::isinf(te)) break;
    if (tf <= te) {
      engine_.advance_to(tf);
      queue_.set_clock(tf);
      const auto due = engine_.take_due();
      for (const auto& f : due)
        if (f.owner.kind == FlowKind::kDp) dp_flows_.erase(f.id);
      for (const auto& f : due) {
        log(tf, EventKind::kFlowDone, f.owner.job, static_cast<std::int64_t>(f.id));
        on_flow_done(f);
      }
      continue;
    }
    const Event ev = queue_.pop();
    engine_.advance_to(ev.time);
    log(ev.time, ev.kind, ev.job, ev.aux);
    switch (ev.kind) {
      case EventKind::kJobArrival:
        on_arrival(ev.job);
        break;
      case EventKind::kComputeDone:
        on_compute_done(ev.job);
        break;
      case EventKind::kLocalCommDone:
        on_local_done(ev.job);
        break;
      case EventKind::kMigrationResume:
        on_resume(ev.job);
        break;
      case EventKind::kRebalance:
        on_rebalance();
        break;
      case EventKind::kFlowDone:
        throw InvariantViolation("flow completion in event queue");
    }
  }
  for (const auto& [id, job] : jobs_) {
    check_invariant(job.phase == Phase::kDone, "simulation ended with unfinished job");
    JobRecord r;
    r.id = id;
    r.model = job.spec.model;
    r.gpus = job.spec.num_workers;
    r.hosts = hosts_for_job(job.spec, *topology_);
    r.tp = job.spec.tp_degree;
    r.pp = job.spec.pp_degree;
    r.arrival = job.spec.arrival_time;
    r.start = job.start;
    r.end = job.end;
    r.ideal = ideal_duration_seconds(job.spec, *topology_);
    r.slowdown = r.ideal > 0 ? (r.end - r.start) / r.ideal : 1.0;
    r.host_moves = job.host_moves;
    r.migrations = job.migrations;
    r.downtime = job.downtime;
    result_.jobs.push_back(r);
    result_.makespan = std::max(result_.makespan, job.end);
  }
  result_.event_hash = hash_.value();
  result_.rate_recomputations = engine_.recomputations();
  return std::move(result_);
}

inline void Simulation::after_refresh() {
  if (config_.check_conservation) {
    ++result_.conservation_checks;
    if (!engine_.conservation_ok()) ++result_.conservation_failures;
  }
  if (config_.check_isolation && migrating_jobs_ == 0 && scheme() != RoutingScheme::kSpray) {
    std::vector<SglbFlow> uses;
    for (const auto& [id, f] : dp_flows_) uses.push_back({f.src_rack, f.dst_rack, f.uplink});
    ++result_.isolation_checks;
    if (!isolated(uses, topology_->num_racks(), topology_->uplinks_per_tor()))
      ++result_.isolation_violations;
  }
}

inline void Simulation::on_arrival(JobId id) {
  auto& job = jobs_.at(id);
  job.phase = Phase::kQueued;
  process(controller_.on_job_arrival(job.spec));
}

inline void Simulation::process(const ControllerActions& actions) {
  for (const auto& d : actions.defrags) {
    SolveRecord s;
    s.time = engine_.now();
    s.trigger = d.trigger;
    s.move_count = d.plan.move_count;
    s.nodes = d.plan.stats.nodes_explored;
    s.optimal = d.plan.stats.optimal;
    s.status = d.plan.status == SolveStatus::kOptimal    ? "optimal"
               : d.plan.status == SolveStatus::kFeasible ? "feasible"
                                                          : "infeasible";
    s.movable_units = d.movable_units;
    s.widened = d.widened;
    s.solve_seconds = d.plan.stats.solve_seconds;
    result_.solves.push_back(s);
    if (!d.diagnostic.empty())
      result_.diagnostics.push_back("t=" + std::to_string(s.time) + " job " +
                                    std::to_string(d.trigger) + ": " + d.diagnostic);
    std::map<JobId, std::vector<HostMove>> by_job;
    for (const auto& m : d.host_moves) by_job[m.unit.job].push_back(m);
    for (auto& [jid, moves] : by_job) {
      auto& job = jobs_.at(jid);
      job.host_moves += static_cast<int>(moves.size());
      if (job.phase != Phase::kRunning) continue;  // not started: relocation is free
      check_invariant(!job.pending, "in-flight job was re-planned");
      job.pending = true;
      job.plan_time = engine_.now();
      ++migrating_jobs_;
      for (const auto& m : moves) {
        MoveTask t;
        t.move = m;
        source_of_[m.from_host] = {jid, job.moves.size()};
        job.moves.push_back(t);
      }
      job.unreached = static_cast<int>(job.moves.size());
    }
    break_cycles();
  }
  for (const auto& spec : actions.admitted) jobs_.at(spec.id).phase = Phase::kWaiting;
  for (auto& [id, job] : jobs_)
    if (job.phase == Phase::kWaiting) try_start(id);
  apply_routing();
  record_series();
}

inline void Simulation::try_start(JobId id) {
  auto& job = jobs_.at(id);
  if (job.phase != Phase::kWaiting) return;
  const auto& stages = controller_.placement().stages(id);
  for (const auto& hosts : stages)
    for (int h : hosts)
      if (phys_[h] != kNoJob) return;
  for (const auto& hosts : stages)
    for (int h : hosts) phys_[h] = id;
  job.hosts = stages;
  job.phase = Phase::kRunning;
  job.start = engine_.now();
  controller_.job_started(id);
  start_iteration(job);
}

inline void Simulation::start_iteration(JobState& job) {
  job.compute_done = false;
  job.in_dp = false;
  job.pp_left = 0;
  for (const auto& d : pp_traffic(job.spec, job.hosts, *topology_)) {
    if (topology_->host_of_gpu(d.src_gpu) == topology_->host_of_gpu(d.dst_gpu) || d.bytes <= 0) continue;
    engine_.add_flow(mice_path(d.src_gpu, d.dst_gpu), d.bytes,
                     {job.spec.id, FlowKind::kPp, job.iteration});
    ++job.pp_left;
  }
  queue_.push(engine_.now() + job.spec.compute_seconds, EventKind::kComputeDone, job.spec.id,
              job.iteration);
}

inline void Simulation::on_compute_done(JobId id) {
  auto& job = jobs_.at(id);
  job.compute_done = true;
  maybe_start_dp(job);
}

inline void Simulation::maybe_start_dp(JobState& job) {
  if (job.compute_done && job.pp_left == 0 && !job.in_dp) start_dp(job);
}

inline void Simulation::start_dp(JobState& job) {
  job.in_dp = true;
  job.dp_left = 0;
  job.local_done = true;
  const double line = topology_->nic_bandwidth() / kBitsPerByte;
  double local_seconds = 0;
  for (const auto& group : replica_groups(job.spec, job.hosts, *topology_)) {
    const auto hops = ring_traffic(group, *topology_);
    const int n = static_cast<int>(group.members.size());
    const int k = std::max<int>(1, static_cast<int>(hops.size()));
    if (n > k) local_seconds = std::max(local_seconds, ring_hop_bytes(group.bytes_per_iteration, n) / line);
    for (std::size_t i = 0; i < hops.size(); ++i) {
      DpFlowInfo info{{job.spec.id, group.stage, group.tp_rank, static_cast<int>(i)},
                      hops[i].src_rack,
                      hops[i].dst_rack,
                      hops[i].src_gpu,
                      hops[i].dst_gpu,
                      0};
      info.uplink = dp_uplink(info);
      const auto id = engine_.add_flow(path(info.src_gpu, info.dst_gpu, info.uplink), hops[i].bytes,
                                       {job.spec.id, FlowKind::kDp, job.iteration});
      dp_flows_.emplace(id, info);
      ++job.dp_left;
    }
  }
  if (job.dp_left > 0) schedule_rebalance();
  if (local_seconds > 0) {
    job.local_done = false;
    queue_.push(engine_.now() + local_seconds, EventKind::kLocalCommDone, job.spec.id, job.iteration);
  }
  if (job.dp_left == 0 && job.local_done) finish_iteration(job);
}

inline void Simulation::on_local_done(JobId id) {
  auto& job = jobs_.at(id);
  job.local_done = true;
  if (job.dp_left == 0) finish_iteration(job);
}

inline void Simulation::on_flow_done(const Flow& flow) {
  auto& job = jobs_.at(flow.owner.job);
  switch (flow.owner.kind) {
    case FlowKind::kPp:
      --job.pp_left;
      maybe_start_dp(job);
      break;
    case FlowKind::kDp:
      dp_flows_.erase(flow.id);
      schedule_rebalance();
      if (--job.dp_left == 0 && job.local_done) finish_iteration(job);
      break;
    case FlowKind::kMigration: {
      const auto task = static_cast<std::size_t>(flow.owner.tag);
      if (--job.moves[task].flows_left == 0) transfer_done(job, task);
      break;
    }
  }
}

inline void Simulation::finish_iteration(JobState& job) {
  job.in_dp = false;
  ++job.iteration;
  if (job.iteration >= job.spec.iterations) {
    complete(job);
  } else if (job.pending) {
    begin_migration(job);
  } else {
    start_iteration(job);
  }
}

inline void Simulation::complete(JobState& job) {
  const JobId id = job.spec.id;
  job.phase = Phase::kDone;
  job.end = engine_.now();
  if (job.pending) {
    // Finished at the barrier: the planned moves are moot.
    for (const auto& t : job.moves) source_of_.erase(t.move.from_host);
    job.moves.clear();
    job.pending = false;
    --migrating_jobs_;
    controller_.migration_finished(id);
  }
  std::vector<int> freed;
  for (const auto& hosts : job.hosts)
    for (int h : hosts) {
      check_invariant(phys_[h] == id, "finishing job does not hold its hosts");
      phys_[h] = kNoJob;
      freed.push_back(h);
    }
  process(controller_.on_job_departure(id));
  for (int h : freed) wake(h);
}

inline void Simulation::begin_migration(JobState& job) {
  job.phase = Phase::kMigrating;
  job.pause_time = engine_.now();
  ++job.migrations;
  const double shard = checkpoint_shard_bytes(job.spec, config_.optimizer_multiplier);
  const int workers =
      std::min(topology_->gpus_per_host(), job.spec.dp_degree * job.spec.tp_degree);
  job.migration_bytes = 0;
  for (std::size_t i = 0; i < job.moves.size(); ++i) {
    auto& t = job.moves[i];
    if (shard > 0) {
      for (int w = 0; w < workers; ++w) {
        const int src = topology_->gpu_id(t.move.from_host, w);
        const int dst = topology_->gpu_id(t.move.to_host, w);
        engine_.add_flow(mice_path(src, dst), shard,
                         {job.spec.id, FlowKind::kMigration, static_cast<std::int64_t>(i)});
        ++t.flows_left;
        job.migration_bytes += shard;
      }
    }
  }
  for (std::size_t i = 0; i < job.moves.size(); ++i)
    if (job.moves[i].flows_left == 0 && !job.moves[i].transferred) transfer_done(job, i);
}

inline void Simulation::transfer_done(JobState& job, std::size_t task) {
  auto& t = job.moves[task];
  t.transferred = true;
  if (t.vacate_early) release_source(job, task);
  try_reach(job, task);
}

inline void Simulation::release_source(JobState& job, std::size_t task) {
  auto& t = job.moves[task];
  if (t.vacated) return;
  t.vacated = true;
  const int h = t.move.from_host;
  check_invariant(phys_[h] == job.spec.id, "migration source not held by its job");
  phys_[h] = kNoJob;
  source_of_.erase(h);
  wake(h);
}

inline void Simulation::try_reach(JobState& job, std::size_t task) {
  auto& t = job.moves[task];
  if (!t.transferred || t.reached) return;
  const int dst = t.move.to_host;
  if (phys_[dst] != kNoJob) {
    waiting_dst_[dst] = {job.spec.id, task};
    return;
  }
  waiting_dst_.erase(dst);
  phys_[dst] = job.spec.id;
  t.reached = true;
  release_source(job, task);
  if (--job.unreached == 0) {
    job.phase = Phase::kReinit;
    queue_.push(engine_.now() + config_.reinit_seconds, EventKind::kMigrationResume, job.spec.id);
  }
}

inline void Simulation::wake(int host) {
  if (phys_[host] != kNoJob) return;
  if (auto it = waiting_dst_.find(host); it != waiting_dst_.end()) {
    const auto [jid, task] = it->second;
    try_reach(jobs_.at(jid), task);
    return;
  }
  if (const auto& owner = controller_.placement().owner(host)) try_start(owner->job);
}

inline void Simulation::break_cycles() {
  // Each host is the source of at most one live task, so "waits for" is a
  // functional graph. Any cycle gets one task that vacates on transfer.
  for (auto& [jid, job] : jobs_) {
    for (std::size_t i = 0; i < job.moves.size(); ++i) {
      auto& start = job.moves[i];
      if (start.reached || start.vacated || start.vacate_early) continue;
      std::set<std::pair<JobId, std::size_t>> seen{{jid, i}};
      const MoveTask* cur = &start;
      while (true) {
        auto it = source_of_.find(cur->move.to_host);
        if (it == source_of_.end()) break;
        const auto& next = jobs_.at(it->second.first).moves[it->second.second];
        if (next.vacate_early) break;
        if (it->second == std::make_pair(jid, i)) {
          start.vacate_early = true;
          break;
        }
        if (!seen.insert(it->second).second) break;
        cur = &next;
      }
    }
  }
}

inline void Simulation::on_resume(JobId id) {
  auto& job = jobs_.at(id);
  MigrationRecord r;
  r.job = id;
  r.plan_time = job.plan_time;
  r.pause_time = job.pause_time;
  r.resume_time = engine_.now();
  r.host_moves = static_cast<int>(job.moves.size());
  r.bytes = job.migration_bytes;
  result_.migrations.push_back(r);
  job.downtime += r.downtime();
  job.moves.clear();
  job.pending = false;
  --migrating_jobs_;
  job.hosts = controller_.placement().stages(id);
  for (const auto& hosts : job.hosts)
    for (int h : hosts) check_invariant(phys_[h] == id, "resumed job does not hold its hosts");
  job.phase = Phase::kRunning;
  controller_.migration_finished(id);
  start_iteration(job);
  record_series();
}

inline void Simulation::apply_routing() {
  if (scheme() == RoutingScheme::kSglb || scheme() == RoutingScheme::kSpray) return;
  for (auto& [id, f] : dp_flows_) {
    const int u = dp_uplink(f);
    if (u == f.uplink) continue;
    f.uplink = u;
    engine_.set_path(id, path(f.src_gpu, f.dst_gpu, u));
  }
}

inline void Simulation::schedule_rebalance() {
  if (scheme() != RoutingScheme::kSglb || rebalance_pending_) return;
  rebalance_pending_ = true;
  queue_.push(engine_.now() + config_.sglb_epoch_seconds, EventKind::kRebalance, 0);
}

inline void Simulation::on_rebalance() {
  rebalance_pending_ = false;
  std::vector<SglbFlow> flows;
  std::vector<std::uint64_t> ids;
  for (const auto& [id, f] : dp_flows_) {
    flows.push_back({f.src_rack, f.dst_rack, f.uplink});
    ids.push_back(id);
  }
  const auto moves = sglb_step(flows, topology_->num_racks(), topology_->uplinks_per_tor(),
                               config_.sglb_hysteresis);
  for (const auto& m : moves) {
    auto& f = dp_flows_.at(ids[m.flow]);
    f.uplink = m.to;
    sglb_state_[f.key] = {f.src_rack, f.dst_rack, m.to};
    engine_.set_path(ids[m.flow], path(f.src_gpu, f.dst_gpu, m.to));
  }
  if (!moves.empty()) schedule_rebalance();
}

inline void Simulation::record_series() {
  const auto report = fragmentation_degree(controller_.placement());
  SeriesRow row;
  row.time = engine_.now();
  row.max_degree = report.max_degree;
  double sum = 0;
  for (int d : report.per_rack) sum += d;
  row.mean_degree = sum / topology_->num_racks();
  row.racks_over = static_cast<int>(
      threshold_violated(report, controller_.config().threshold).size());
  row.fragmented_groups = report.fragmented_groups;
  for (const auto& [id, job] : jobs_)
    row.running += job.phase == Phase::kRunning || job.phase == Phase::kMigrating ||
                   job.phase == Phase::kReinit;
  row.queued = static_cast<int>(controller_.scheduler().queue().size());
  double used = 0, cap = 0;
  const auto& caps = engine_.capacities();
  std::vector<double> load(caps.size(), 0.0);
  for (const auto& [id, f] : engine_.flows())
    for (int l : f.links) load[l] += f.rate_bps;
  for (std::size_t l = 0; l < caps.size(); ++l) {
    if (topology_->link_at(l).kind != LinkKind::kTorUplink) continue;
    used += load[l];
    cap += caps[l];
  }
  row.uplink_utilization = cap > 0 ? used / cap : 0;
  result_.series.push_back(row);
}

/// Convenience wrapper: one run of `jobs` under `algorithm`.
inline RunResult simulate(const ClusterTopology& topology, const ControllerConfig& controller,
                          const SimConfig& config, std::vector<JobSpec> jobs) {
  return Simulation(topology, controller, config, std::move(jobs)).run();
}

}  // namespace defragsim

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
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "defragsim/core.hpp"
#include "defragsim/placement.hpp"
#include "defragsim/topology.hpp"

namespace defragsim {

/// A trainable model and the parallelisms it may be run with.
struct ModelTemplate {
  std::string name;
  double parameter_bytes = 0;
  bool allow_dp = false;
  bool allow_fsdp = false;
  bool allow_tp = false;
  bool allow_pp = false;
  /// Per-iteration compute of one full replica's local batch on a single GPU.
  double replica_compute_seconds = 1.0;
  /// Activation bytes crossing one stage boundary, per direction, per iteration.
  double pp_boundary_bytes = 0;

  /// Per-GPU compute time: the replica's work is split across TP x PP shards.
  double compute_seconds(int tp_degree, int pp_degree) const {
    return replica_compute_seconds / (static_cast<double>(tp_degree) * pp_degree);
  }
  void validate() const;
};

/// The six model families used for trace generation. Parameter bytes assume
/// bf16 weights; compute constants give a roughly 1:2 communication:compute
/// ratio at 400 Gbps for mid-sized data-parallel rings.
std::vector<ModelTemplate> default_model_menu();

struct JobSpec {
  JobId id = 0;
  std::string model;
  int num_workers = 1;  // GPUs
  int dp_degree = 1;
  int tp_degree = 1;
  int pp_degree = 1;
  bool fsdp = false;
  int iterations = 1;
  double compute_seconds = 0;      // per iteration, per GPU
  double dp_collective_bytes = 0;  // S: all-reduce payload of one replica group
  double pp_bytes = 0;             // per stage boundary, per direction
  double parameter_bytes = 0;
  double arrival_time = 0;

  bool operator==(const JobSpec&) const = default;
};

/// Builds a job from a template; DP payload is the parameter shard held by one
/// replica group (parameters / (tp * pp)).
JobSpec make_job(const ModelTemplate& model, JobId id, int num_workers, int dp, int tp, int pp,
                 bool fsdp, int iterations, double arrival_time);

/// Throws ConfigError unless num_workers = dp*tp*pp, TP divides the host, and
/// the job is otherwise well formed for this topology.
void validate_job(const JobSpec& job, const ClusterTopology& topology);

/// Whole hosts occupied by one pipeline stage (stages never share a host).
inline int hosts_per_stage(const JobSpec& job, const ClusterTopology& topology) {
  const int gpus = job.dp_degree * job.tp_degree;
  return (gpus + topology.gpus_per_host() - 1) / topology.gpus_per_host();
}
inline int hosts_for_job(const JobSpec& job, const ClusterTopology& topology) {
  return hosts_per_stage(job, topology) * job.pp_degree;
}

/// Bytes every ring hop carries in a bandwidth-optimal ring all-reduce.
inline double ring_hop_bytes(double collective_bytes, int group_size) {
  if (group_size < 2) return 0.0;
  return 2.0 * collective_bytes * (group_size - 1) / group_size;
}

/// Per-GPU checkpoint shard moved by a migration: weights plus optimizer state
/// held by one GPU. Plain DP replicates the TP x PP shard; FSDP also divides by dp.
double checkpoint_shard_bytes(const JobSpec& job, double optimizer_multiplier);

/// Isolated-run iteration time: PP transfers overlap compute, then the DP ring
/// runs with every flow at NIC line rate.
double ideal_iteration_seconds(const JobSpec& job, const ClusterTopology& topology);
inline double ideal_duration_seconds(const JobSpec& job, const ClusterTopology& topology) {
  return job.iterations * ideal_iteration_seconds(job, topology);
}

// ---------------------------------------------------------------------------
// Replica groups and traffic

enum class GroupKind { kDpRing };

struct ReplicaGroup {
  JobId job = 0;
  int stage = 0;
  int tp_rank = 0;
  GroupKind kind = GroupKind::kDpRing;
  std::vector<int> members;  // GPU ids in ring order, same-rack members contiguous
  double bytes_per_iteration = 0;
};

/// The job's d_s * p DP replica groups under its current placement. Members are
/// re-ranked by (rack, host, slot), which keeps same-rack workers contiguous.
std::vector<ReplicaGroup> replica_groups(const JobSpec& job, const Placement& placement);
std::vector<ReplicaGroup> replica_groups(const JobSpec& job,
                                         const std::vector<std::vector<int>>& stage_hosts,
                                         const ClusterTopology& topology);

struct RackDemand {
  int src_rack = 0;
  int dst_rack = 0;
  double bytes = 0;
  int src_gpu = 0;
  int dst_gpu = 0;
};

/// Cross-rack flows of one ring all-reduce: k flows forming a directed cycle
/// over the k racks the group spans (none when k = 1).
std::vector<RackDemand> ring_traffic(const ReplicaGroup& group, const ClusterTopology& topology);

struct PointDemand {
  int src_gpu = 0;
  int dst_gpu = 0;
  double bytes = 0;
};

/// One forward and one backward activation transfer per adjacent stage pair.
std::vector<PointDemand> pp_traffic(const JobSpec& job, const Placement& placement);
std::vector<PointDemand> pp_traffic(const JobSpec& job,
                                    const std::vector<std::vector<int>>& stage_hosts,
                                    const ClusterTopology& topology);

// ---------------------------------------------------------------------------
// Traces

struct WorkloadMenu {
  std::vector<ModelTemplate> models = default_model_menu();
  std::vector<int> job_gpus = {8, 16, 32, 64, 128, 256};
  std::vector<int> iterations = {200, 400, 800};
  /// TP degrees tried when a model allows TP (1 is always a candidate).
  std::vector<int> tp_degrees = {8};
  /// PP degrees tried when a model allows PP (1 is always a candidate).
  std::vector<int> pp_degrees = {2, 4};
};

struct Trace {
  std::vector<JobSpec> jobs;  // non-decreasing arrival_time
  double target_load = 0;
  std::uint64_t seed = 0;
};

/// One parallelization option for a (model, size) draw.
struct ParallelismChoice {
  bool fsdp = false;
  int dp = 1;
  int tp = 1;
  int pp = 1;
};

/// Every admissible (FSDP flag, TP, PP) combination for a model at a size.
std::vector<ParallelismChoice> parallelism_choices(const ModelTemplate& model, int num_workers,
                                                   const WorkloadMenu& menu,
                                                   const ClusterTopology& topology);

/// E[occupied GPUs x ideal duration] of one job drawn from the menu, computed
/// by exact enumeration of the uniform draws.
double expected_gpu_seconds(const WorkloadMenu& menu, const ClusterTopology& topology);

/// Poisson arrivals calibrated so that offered GPU occupancy equals
/// load x total GPUs. Pure function of its arguments.
Trace generate_trace(const WorkloadMenu& menu, const ClusterTopology& topology, double load,
                     std::uint64_t seed, int num_jobs);

nlohmann::json job_to_json(const JobSpec& job);
JobSpec job_from_json(const nlohmann::json& j);
/// Line-delimited JSON, one job per line.
void write_trace(std::ostream& out, const Trace& trace);
Trace read_trace(std::istream& in);

// ---------------------------------------------------------------------------

inline void ModelTemplate::validate() const {
  if (name.empty()) throw ConfigError("model: empty name");
  if (!(parameter_bytes > 0)) throw ConfigError("model " + name + ": parameter_bytes must be > 0");
  if (!allow_dp && !allow_fsdp) throw ConfigError("model " + name + ": needs DP or FSDP");
  if (!(replica_compute_seconds >= 0)) throw ConfigError("model " + name + ": bad compute time");
  if (!(pp_boundary_bytes >= 0)) throw ConfigError("model " + name + ": bad pp bytes");
}

inline std::vector<ModelTemplate> default_model_menu() {
  // name, params, dp, fsdp, tp, pp, replica compute (s), pp boundary bytes
  return {
      {"gpt3-13b", 26 * kGB, true, false, false, false, 8.0, 0},
      {"gpt3-7b", 14 * kGB, true, false, false, false, 4.5, 0},
      {"gpt-oss-120b", 240 * kGB, false, true, false, false, 70.0, 0},
      {"gpt-oss-20b", 42 * kGB, false, true, false, false, 13.0, 0},
      {"llama2-70b", 140 * kGB, true, true, true, true, 42.0, 8 * kGB},
      {"llama3-70b", 140 * kGB, true, true, true, true, 42.0, 8 * kGB},
  };
}

inline JobSpec make_job(const ModelTemplate& model, JobId id, int num_workers, int dp, int tp,
                        int pp, bool fsdp, int iterations, double arrival_time) {
  JobSpec j;
  j.id = id;
  j.model = model.name;
  j.num_workers = num_workers;
  j.dp_degree = dp;
  j.tp_degree = tp;
  j.pp_degree = pp;
  j.fsdp = fsdp;
  j.iterations = iterations;
  j.compute_seconds = model.compute_seconds(tp, pp);
  j.dp_collective_bytes = model.parameter_bytes / (static_cast<double>(tp) * pp);
  j.pp_bytes = pp > 1 ? model.pp_boundary_bytes : 0.0;
  j.parameter_bytes = model.parameter_bytes;
  j.arrival_time = arrival_time;
  return j;
}

inline void validate_job(const JobSpec& job, const ClusterTopology& topology) {
  const std::string who = "job " + std::to_string(job.id);
  if (job.dp_degree < 1 || job.tp_degree < 1 || job.pp_degree < 1)
    throw ConfigError(who + ": degrees must be >= 1");
  if (job.num_workers != job.dp_degree * job.tp_degree * job.pp_degree)
    throw ConfigError(who + ": num_workers != dp * tp * pp");
  if (job.tp_degree > topology.gpus_per_host() || topology.gpus_per_host() % job.tp_degree != 0)
    throw ConfigError(who + ": TP degree must divide gpus_per_host");
  if (job.iterations < 1) throw ConfigError(who + ": iterations must be >= 1");
  if (!(job.compute_seconds >= 0) || !(job.dp_collective_bytes >= 0) || !(job.pp_bytes >= 0))
    throw ConfigError(who + ": negative time or volume");
  if (hosts_for_job(job, topology) > topology.total_hosts())
    throw ConfigError(who + ": larger than the cluster");
}

inline double checkpoint_shard_bytes(const JobSpec& job, double optimizer_multiplier) {
  double divisor = static_cast<double>(job.tp_degree) * job.pp_degree;
  if (job.fsdp) divisor *= job.dp_degree;
  return job.parameter_bytes / divisor * optimizer_multiplier;
}

inline double ideal_iteration_seconds(const JobSpec& job, const ClusterTopology& topology) {
  const double line_rate = topology.nic_bandwidth() / kBitsPerByte;  // bytes/s
  const double pp_time = job.pp_degree > 1 ? job.pp_bytes / line_rate : 0.0;
  const double ring_time = ring_hop_bytes(job.dp_collective_bytes, job.dp_degree) / line_rate;
  return std::max(job.compute_seconds, pp_time) + ring_time;
}

inline std::vector<ReplicaGroup> replica_groups(const JobSpec& job, const Placement& placement) {
  return replica_groups(job, placement.stages(job.id), placement.topology());
}

inline std::vector<ReplicaGroup> replica_groups(const JobSpec& job,
                                                const std::vector<std::vector<int>>& stages,
                                                const ClusterTopology& topo) {
  std::vector<ReplicaGroup> groups;
  for (int s = 0; s < static_cast<int>(stages.size()); ++s) {
    std::vector<int> hosts = stages[s];
    std::sort(hosts.begin(), hosts.end());  // host ids are rack-major
    for (int r = 0; r < job.tp_degree; ++r) {
      ReplicaGroup g;
      g.job = job.id;
      g.stage = s;
      g.tp_rank = r;
      g.bytes_per_iteration = job.dp_collective_bytes;
      for (int h : hosts) {
        for (int slot = r; slot < topo.gpus_per_host(); slot += job.tp_degree) {
          if (static_cast<int>(g.members.size()) == job.dp_degree) break;
          g.members.push_back(topo.gpu_id(h, slot));
        }
      }
      groups.push_back(std::move(g));
    }
  }
  return groups;
}

inline std::vector<RackDemand> ring_traffic(const ReplicaGroup& group,
                                            const ClusterTopology& topology) {
  if (group.members.empty()) throw std::invalid_argument("ring_traffic: empty group");
  struct Segment {
    int rack, first_gpu, last_gpu;
  };
  std::vector<Segment> segments;
  for (int gpu : group.members) {
    const int rack = topology.rack_of_gpu(gpu);
    if (!segments.empty() && segments.back().rack == rack) {
      segments.back().last_gpu = gpu;
    } else {
      for (const auto& seg : segments)
        if (seg.rack == rack)
          throw std::invalid_argument("ring_traffic: same-rack members not contiguous");
      segments.push_back({rack, gpu, gpu});
    }
  }
  std::vector<RackDemand> out;
  if (segments.size() < 2) return out;
  const double bytes =
      ring_hop_bytes(group.bytes_per_iteration, static_cast<int>(group.members.size()));
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& from = segments[i];
    const auto& to = segments[(i + 1) % segments.size()];
    out.push_back({from.rack, to.rack, bytes, from.last_gpu, to.first_gpu});
  }
  return out;
}

inline std::vector<PointDemand> pp_traffic(const JobSpec& job, const Placement& placement) {
  return pp_traffic(job, placement.stages(job.id), placement.topology());
}

inline std::vector<PointDemand> pp_traffic(const JobSpec& job,
                                           const std::vector<std::vector<int>>& stages,
                                           const ClusterTopology& topo) {
  std::vector<PointDemand> out;
  if (job.pp_degree < 2) return out;
  auto anchor = [&](int stage) { return *std::min_element(stages[stage].begin(), stages[stage].end()); };
  const int back_slot = 1 % topo.gpus_per_host();
  for (int s = 0; s + 1 < job.pp_degree; ++s) {
    const int a = anchor(s), b = anchor(s + 1);
    out.push_back({topo.gpu_id(a, 0), topo.gpu_id(b, 0), job.pp_bytes});
    out.push_back({topo.gpu_id(b, back_slot), topo.gpu_id(a, back_slot), job.pp_bytes});
  }
  return out;
}

inline std::vector<ParallelismChoice> parallelism_choices(const ModelTemplate& model,
                                                          int num_workers,
                                                          const WorkloadMenu& menu,
                                                          const ClusterTopology& topology) {
  const int gph = topology.gpus_per_host();
  std::vector<bool> modes;
  if (model.allow_dp) modes.push_back(false);
  if (model.allow_fsdp) modes.push_back(true);
  std::vector<int> tps = {1};
  if (model.allow_tp)
    for (int t : menu.tp_degrees)
      if (t > 1 && std::find(tps.begin(), tps.end(), t) == tps.end()) tps.push_back(t);
  std::vector<int> pps = {1};
  if (model.allow_pp)
    for (int p : menu.pp_degrees)
      if (p > 1 && std::find(pps.begin(), pps.end(), p) == pps.end()) pps.push_back(p);

  std::vector<ParallelismChoice> out;
  for (bool fsdp : modes) {
    for (int tp : tps) {
      if (tp > gph || gph % tp != 0 || num_workers % tp != 0) continue;
      for (int pp : pps) {
        if (num_workers % (tp * pp) != 0) continue;
        const int stage_gpus = num_workers / pp;
        // Stages occupy whole hosts; only unstaged jobs may be smaller than a host.
        if (pp > 1 && stage_gpus % gph != 0) continue;
        out.push_back({fsdp, num_workers / (tp * pp), tp, pp});
      }
    }
  }
  return out;
}

namespace detail {

inline std::vector<int> sizes_that_fit(const WorkloadMenu& menu, const ClusterTopology& topology) {
  std::vector<int> out;
  for (int n : menu.job_gpus) {
    const int hosts = (n + topology.gpus_per_host() - 1) / topology.gpus_per_host();
    if (n >= 1 && hosts <= topology.total_hosts()) out.push_back(n);
  }
  return out;
}

inline void validate_menu(const WorkloadMenu& menu, const ClusterTopology& topology) {
  if (menu.models.empty()) throw ConfigError("workload: empty model menu");
  for (const auto& m : menu.models) m.validate();
  if (sizes_that_fit(menu, topology).empty()) throw ConfigError("workload: no job size fits");
  if (menu.iterations.empty()) throw ConfigError("workload: empty iteration menu");
  for (int it : menu.iterations)
    if (it < 1) throw ConfigError("workload: iterations must be >= 1");
}

}  // namespace detail

inline double expected_gpu_seconds(const WorkloadMenu& menu, const ClusterTopology& topology) {
  detail::validate_menu(menu, topology);
  const auto sizes = detail::sizes_that_fit(menu, topology);
  double over_models = 0;
  for (const auto& model : menu.models) {
    double over_sizes = 0;
    for (int n : sizes) {
      const auto choices = parallelism_choices(model, n, menu, topology);
      if (choices.empty()) throw ConfigError("workload: no parallelism fits " + model.name);
      double over_choices = 0;
      for (const auto& c : choices) {
        double over_iters = 0;
        for (int it : menu.iterations) {
          const JobSpec j = make_job(model, 0, n, c.dp, c.tp, c.pp, c.fsdp, it, 0);
          over_iters += hosts_for_job(j, topology) * topology.gpus_per_host() *
                        ideal_duration_seconds(j, topology);
        }
        over_choices += over_iters / menu.iterations.size();
      }
      over_sizes += over_choices / choices.size();
    }
    over_models += over_sizes / sizes.size();
  }
  return over_models / menu.models.size();
}

inline Trace generate_trace(const WorkloadMenu& menu, const ClusterTopology& topology, double load,
                            std::uint64_t seed, int num_jobs) {
  if (!(load > 0) || load > 1) throw ConfigError("trace: load must be in (0, 1]");
  if (num_jobs < 0) throw ConfigError("trace: negative job count");
  const double rate = load * topology.total_gpus() / expected_gpu_seconds(menu, topology);
  const auto sizes = detail::sizes_that_fit(menu, topology);

  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  std::exponential_distribution<double> gap(rate);

  Trace trace;
  trace.target_load = load;
  trace.seed = seed;
  double t = 0;
  for (int i = 0; i < num_jobs; ++i) {
    t += gap(rng);
    const auto& model = menu.models[pick(menu.models.size())];
    const int n = sizes[pick(sizes.size())];
    const auto choices = parallelism_choices(model, n, menu, topology);
    const auto& c = choices[pick(choices.size())];
    const int iterations = menu.iterations[pick(menu.iterations.size())];
    trace.jobs.push_back(make_job(model, i, n, c.dp, c.tp, c.pp, c.fsdp, iterations, t));
  }
  return trace;
}

inline nlohmann::json job_to_json(const JobSpec& job) {
  return {{"id", job.id},
          {"model", job.model},
          {"num_workers", job.num_workers},
          {"dp", job.dp_degree},
          {"tp", job.tp_degree},
          {"pp", job.pp_degree},
          {"fsdp", job.fsdp},
          {"iterations", job.iterations},
          {"compute_seconds", job.compute_seconds},
          {"dp_collective_bytes", job.dp_collective_bytes},
          {"pp_bytes", job.pp_bytes},
          {"parameter_bytes", job.parameter_bytes},
          {"arrival_time", job.arrival_time}};
}

inline JobSpec job_from_json(const nlohmann::json& j) {
  try {
    JobSpec job;
    job.id = j.at("id").get<JobId>();
    job.model = j.at("model").get<std::string>();
    job.num_workers = j.at("num_workers").get<int>();
    job.dp_degree = j.at("dp").get<int>();
    job.tp_degree = j.at("tp").get<int>();
    job.pp_degree = j.at("pp").get<int>();
    job.fsdp = j.at("fsdp").get<bool>();
    job.iterations = j.at("iterations").get<int>();
    job.compute_seconds = j.at("compute_seconds").get<double>();
    job.dp_collective_bytes = j.at("dp_collective_bytes").get<double>();
    job.pp_bytes = j.at("pp_bytes").get<double>();
    job.parameter_bytes = j.at("parameter_bytes").get<double>();
    job.arrival_time = j.at("arrival_time").get<double>();
    return job;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("trace record: ") + e.what());
  }
}

inline void write_trace(std::ostream& out, const Trace& trace) {
  out << nlohmann::json{{"target_load", trace.target_load}, {"seed", trace.seed}}.dump() << '\n';
  for (const auto& job : trace.jobs) out << job_to_json(job).dump() << '\n';
}

inline Trace read_trace(std::istream& in) {
  Trace trace;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("trace: ") + e.what());
    }
    if (header) {
      header = false;
      if (j.contains("target_load")) {
        trace.target_load = j.at("target_load").get<double>();
        trace.seed = j.at("seed").get<std::uint64_t>();
        continue;
      }
    }
    trace.jobs.push_back(job_from_json(j));
  }
  for (std::size_t i = 1; i < trace.jobs.size(); ++i)
    if (trace.jobs[i].arrival_time < trace.jobs[i - 1].arrival_time)
      throw ConfigError("trace: arrival times must be non-decreasing");
  return trace;
}

}  // namespace defragsim

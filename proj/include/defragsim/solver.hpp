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
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "defragsim/core.hpp"
#include "defragsim/min_cost_flow.hpp"

namespace defragsim {

/// One movable unit (job or pipeline stage) of a defragmentation instance.
struct SolverJob {
  JobId id = 0;
  int stage = 0;
  int size = 1;               // s_j, in hosts
  int rings = 1;              // d_s, DP flows the unit emits per spanned rack
  std::vector<int> initial;   // w0(s, t)
};

/// Rack-level defragmentation problem. Units not listed are frozen: they only
/// appear through `reserved` (hosts they hold) and `fixed_degree` (the
/// fragmentation they already contribute).
struct SolverInstance {
  int racks = 0;          // T
  int rack_capacity = 0;  // C, hosts per rack
  int threshold = 2;      // lambda
  std::vector<int> reserved;
  std::vector<int> fixed_degree;
  std::vector<SolverJob> jobs;

  int capacity(int rack) const { return rack_capacity - reserved[rack]; }
  int max_rings() const;
  /// Throws ConfigError when the instance is malformed (initial placement over capacity or not conserving job sizes).
  void validate() const;
};

using RackMatrix = std::vector<std::vector<int>>;  // [job][rack]

struct RackMove {
  int job = 0;  // index into SolverInstance::jobs
  int count = 0;
  int from = 0;
  int to = 0;
};

enum class SolveStatus { kOptimal, kFeasible, kInfeasible };

struct SolverStats {
  int move_count = 0;
  double solve_seconds = 0;
  long nodes_explored = 0;
  bool optimal = false;
};

struct MigrationPlan {
  SolveStatus status = SolveStatus::kInfeasible;
  RackMatrix target;  // w(s, t)
  std::vector<RackMove> moves;
  int move_count = 0;
  SolverStats stats;
};

struct SolverOptions {
  double time_limit_seconds = 30.0;
  long node_limit = 2'000'000;
  bool warm_start = true;
};

/// Minimum-migration placement meeting the weighted per-rack fragmentation
/// bound, by branch and bound over rack-presence decisions. Each node's bound
/// is an exact min-cost-flow relaxation that drops the fragmentation rows.
MigrationPlan solve(const SolverInstance& instance, const SolverOptions& options = {});

inline SolverStats solver_stats(const MigrationPlan& plan) { return plan.stats; }

/// Exhaustive minimum over every feasible rack-level placement. Returns
/// nullopt when no feasible placement exists; throws std::length_error when
/// the enumeration would exceed `max_states`.
std::optional<int> brute_force_min_moves(const SolverInstance& instance,
                                         long max_states = 50'000'000);

/// Per-rack weighted fragmentation of a rack-level placement (incl. fixed).
std::vector<int> weighted_degrees(const SolverInstance& instance, const RackMatrix& w);
/// Capacity, size conservation and ring-weighted degree bound.
bool satisfies_constraints(const SolverInstance& instance, const RackMatrix& w);
/// 1/2 * sum |w - w0|.
int migration_distance(const SolverInstance& instance, const RackMatrix& w);
/// Pairs each job's surplus and deficit racks in index order.
std::vector<RackMove> decompose_moves(const SolverInstance& instance, const RackMatrix& w);

nlohmann::json instance_to_json(const SolverInstance& instance);
SolverInstance instance_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------

inline int SolverInstance::max_rings() const {
  int d = 0;
  for (const auto& j : jobs) d = std::max(d, j.rings);
  return d;
}

inline void SolverInstance::validate() const {
  if (racks < 1 || racks > 64) throw ConfigError("solver instance: racks must be in [1, 64]");
  if (rack_capacity < 0) throw ConfigError("solver instance: negative capacity");
  if (threshold < 0) throw ConfigError("solver instance: negative threshold");
  if (static_cast<int>(reserved.size()) != racks || static_cast<int>(fixed_degree.size()) != racks)
    throw ConfigError("solver instance: per-rack vectors have wrong length");
  std::vector<int> load(racks, 0);
  for (const auto& j : jobs) {
    if (j.size < 1 || j.rings < 1) throw ConfigError("solver instance: bad job size or rings");
    if (static_cast<int>(j.initial.size()) != racks)
      throw ConfigError("solver instance: initial placement has wrong length");
    int sum = 0;
    for (int t = 0; t < racks; ++t) {
      if (j.initial[t] < 0) throw ConfigError("solver instance: negative w0");
      sum += j.initial[t];
      load[t] += j.initial[t];
    }
    if (sum != j.size) throw ConfigError("solver instance: w0 does not sum to job size");
  }
  for (int t = 0; t < racks; ++t)
    if (reserved[t] < 0 || load[t] > capacity(t))
      throw ConfigError("solver instance: rack over capacity in w0");
}

inline std::vector<int> weighted_degrees(const SolverInstance& instance, const RackMatrix& w) {
  std::vector<int> degree = instance.fixed_degree;
  for (std::size_t s = 0; s < instance.jobs.size(); ++s) {
    int spanned = 0;
    for (int t = 0; t < instance.racks; ++t) spanned += w[s][t] > 0;
    if (spanned < 2) continue;
    for (int t = 0; t < instance.racks; ++t)
      if (w[s][t] > 0) degree[t] += instance.jobs[s].rings;
  }
  return degree;
}

inline bool satisfies_constraints(const SolverInstance& instance, const RackMatrix& w) {
  if (w.size() != instance.jobs.size()) return false;
  std::vector<int> load(instance.racks, 0);
  for (std::size_t s = 0; s < w.size(); ++s) {
    if (static_cast<int>(w[s].size()) != instance.racks) return false;
    int sum = 0;
    for (int t = 0; t < instance.racks; ++t) {
      if (w[s][t] < 0) return false;
      sum += w[s][t];
      load[t] += w[s][t];
    }
    if (sum != instance.jobs[s].size) return false;
  }
  for (int t = 0; t < instance.racks; ++t)
    if (load[t] > instance.capacity(t)) return false;
  for (int d : weighted_degrees(instance, w))
    if (d > instance.threshold) return false;
  return true;
}

inline int migration_distance(const SolverInstance& instance, const RackMatrix& w) {
  int total = 0;
  for (std::size_t s = 0; s < instance.jobs.size(); ++s)
    for (int t = 0; t < instance.racks; ++t) total += std::abs(w[s][t] - instance.jobs[s].initial[t]);
  return total / 2;
}

inline std::vector<RackMove> decompose_moves(const SolverInstance& instance, const RackMatrix& w) {
  std::vector<RackMove> moves;
  for (std::size_t s = 0; s < instance.jobs.size(); ++s) {
    std::vector<std::pair<int, int>> give, take;
    for (int t = 0; t < instance.racks; ++t) {
      const int delta = w[s][t] - instance.jobs[s].initial[t];
      if (delta < 0) give.push_back({t, -delta});
      if (delta > 0) take.push_back({t, delta});
    }
    std::size_t g = 0, k = 0;
    while (g < give.size() && k < take.size()) {
      const int n = std::min(give[g].second, take[k].second);
      moves.push_back({static_cast<int>(s), n, give[g].first, take[k].first});
      if ((give[g].second -= n) == 0) ++g;
      if ((take[k].second -= n) == 0) ++k;
    }
  }
  return moves;
}

namespace detail {

using RackMask = std::uint64_t;

inline RackMask bit(int t) { return RackMask{1} << t; }

/// Min-cost-flow relaxation: every unit keeps its workers where allowed; units
/// evicted from forbidden racks, plus any they displace, are re-homed at one
/// migration per worker. The fragmentation rows are ignored.
class Relaxation {
 public:
  explicit Relaxation(const SolverInstance& instance) : instance_(instance) {}

  std::optional<std::pair<int, RackMatrix>> solve(const std::vector<RackMask>& allowed) const {
    const int jobs = static_cast<int>(instance_.jobs.size());
    const int racks = instance_.racks;
    RackMatrix w(jobs, std::vector<int>(racks, 0));
    std::vector<int> forced(jobs, 0);
    std::vector<int> free(racks);
    for (int t = 0; t < racks; ++t) free[t] = instance_.capacity(t);
    int total_forced = 0;
    for (int s = 0; s < jobs; ++s) {
      if (allowed[s] == 0) return std::nullopt;
      for (int t = 0; t < racks; ++t) {
        const int w0 = instance_.jobs[s].initial[t];
        if (allowed[s] & bit(t)) {
          w[s][t] = w0;
          free[t] -= w0;
        } else {
          forced[s] += w0;
        }
      }
      total_forced += forced[s];
    }
    if (total_forced == 0) return std::make_pair(0, std::move(w));

    // Nodes: 0 source, 1..J pools, J+1..J+T racks, J+T+1 sink.
    const int source = 0, sink = jobs + racks + 1;
    MinCostFlow flow(jobs + racks + 2);
    struct ArcRef {
      int job, rack, arc, sign;
    };
    std::vector<ArcRef> refs;
    for (int s = 0; s < jobs; ++s) {
      if (forced[s] > 0) flow.add_edge(source, 1 + s, forced[s], 1);
      for (int t = 0; t < racks; ++t) {
        if (!(allowed[s] & bit(t))) continue;
        refs.push_back({s, t, flow.add_edge(1 + s, 1 + jobs + t, MinCostFlow::kInfinite, 0), +1});
        if (w[s][t] > 0) refs.push_back({s, t, flow.add_edge(1 + jobs + t, 1 + s, w[s][t], 1), -1});
      }
    }
    for (int t = 0; t < racks; ++t)
      if (free[t] > 0) flow.add_edge(1 + jobs + t, sink, free[t], 0);
    const auto [sent, cost] = flow.run(source, sink, total_forced);
    if (sent < total_forced) return std::nullopt;
    for (const auto& r : refs) w[r.job][r.rack] += r.sign * flow.flow(r.arc);
    return std::make_pair(static_cast<int>(cost), std::move(w));
  }

 private:
  const SolverInstance& instance_;
};

struct SearchNode {
  std::vector<RackMask> allowed;
  std::vector<RackMask> committed;  // (unit, rack) pairs fixed as "present and fragmented"
  RackMatrix w;                     // relaxation optimum
  int bound = 0;
  int depth = 0;
  long seq = 0;
};

struct NodeOrder {
  bool operator()(const SearchNode& a, const SearchNode& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.seq > b.seq;
  }
};

/// Picks the most over-threshold rack of a relaxation optimum and the cheapest
/// uncommitted fragmented unit on it. Returns nullopt when w is feasible.
inline std::optional<std::pair<int, int>> pick_branch(const SolverInstance& instance,
                                                      const SearchNode& node) {
  const auto degree = weighted_degrees(instance, node.w);
  int rack = -1;
  for (int t = 0; t < instance.racks; ++t)
    if (degree[t] > instance.threshold && (rack < 0 || degree[t] > degree[rack])) rack = t;
  if (rack < 0) return std::nullopt;
  int best = -1, best_cost = 0;
  for (int s = 0; s < static_cast<int>(instance.jobs.size()); ++s) {
    if (node.w[s][rack] == 0 || (node.committed[s] & bit(rack))) continue;
    int spanned = 0;
    for (int t = 0; t < instance.racks; ++t) spanned += node.w[s][t] > 0;
    if (spanned < 2) continue;
    const int here = node.w[s][rack];
    const int cost = std::min(here, instance.jobs[s].size - here);
    if (best < 0 || cost < best_cost) {
      best = s;
      best_cost = cost;
    }
  }
  return std::make_pair(rack, best);
}

inline bool commitments_fit(const SolverInstance& instance, const SearchNode& node) {
  for (int t = 0; t < instance.racks; ++t) {
    int load = instance.fixed_degree[t];
    for (std::size_t s = 0; s < node.committed.size(); ++s)
      if (node.committed[s] & bit(t)) load += instance.jobs[s].rings;
    if (load > instance.threshold) return false;
  }
  for (std::size_t s = 0; s < node.committed.size(); ++s) {
    if (node.committed[s] == 0) continue;
    if ((node.committed[s] & ~node.allowed[s]) != 0) return false;
    if (std::popcount(node.allowed[s]) < 2) return false;
  }
  return true;
}

}  // namespace detail

inline MigrationPlan solve(const SolverInstance& instance, const SolverOptions& options) {
  using namespace detail;
  instance.validate();
  const auto started = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };

  const int jobs = static_cast<int>(instance.jobs.size());
  const RackMask all = instance.racks == 64 ? ~RackMask{0} : (bit(instance.racks) - 1);
  const Relaxation relaxation(instance);

  MigrationPlan plan;
  long nodes = 0;
  long seq = 0;
  std::optional<RackMatrix> incumbent;
  int incumbent_cost = 0;

  auto evaluate = [&](SearchNode& node) {
    ++nodes;
    auto result = relaxation.solve(node.allowed);
    if (!result) return false;
    node.bound = result->first;
    node.w = std::move(result->second);
    return true;
  };
  auto offer = [&](const SearchNode& node) {
    if (!incumbent || node.bound < incumbent_cost) {
      incumbent = node.w;
      incumbent_cost = node.bound;
    }
  };
  // Children that forbid the rack (A) or pin the unit whole on it (B).
  auto restricted_children = [&](const SearchNode& node, int rack, int s) {
    std::vector<SearchNode> out;
    SearchNode forbid = node;
    forbid.allowed[s] &= ~bit(rack);
    SearchNode whole = node;
    whole.allowed[s] = bit(rack);
    for (SearchNode* child : {&forbid, &whole}) {
      if (child == &whole && node.committed[s] != 0) continue;
      if (child->allowed[s] == 0 || !commitments_fit(instance, *child)) continue;
      child->depth = node.depth + 1;
      child->seq = ++seq;
      if (evaluate(*child)) out.push_back(std::move(*child));
    }
    return out;
  };

  SearchNode root;
  root.allowed.assign(jobs, all);
  root.committed.assign(jobs, 0);
  if (!evaluate(root)) {
    plan.status = SolveStatus::kInfeasible;
    plan.stats.nodes_explored = nodes;
    plan.stats.solve_seconds = elapsed();
    return plan;
  }

  if (options.warm_start) {
    // Greedy dive: always take the cheaper restriction, never commit.
    SearchNode node = root;
    while (true) {
      const auto branch = pick_branch(instance, node);
      if (!branch) {
        offer(node);
        break;
      }
      if (branch->second < 0) break;
      auto children = restricted_children(node, branch->first, branch->second);
      if (children.empty()) break;
      auto best = std::min_element(children.begin(), children.end(),
                                   [](const auto& a, const auto& b) { return a.bound < b.bound; });
      node = std::move(*best);
    }
  }

  bool exhausted = true;
  std::priority_queue<SearchNode, std::vector<SearchNode>, NodeOrder> open;
  open.push(std::move(root));
  while (!open.empty()) {
    if (nodes >= options.node_limit || elapsed() > options.time_limit_seconds) {
      exhausted = false;
      break;
    }
    SearchNode node = open.top();
    open.pop();
    if (incumbent && node.bound >= incumbent_cost) continue;
    const auto branch = pick_branch(instance, node);
    if (!branch) {
      offer(node);
      continue;
    }
    const auto [rack, s] = *branch;
    if (s < 0) continue;  // violation made only of committed units and fixed load
    for (auto& child : restricted_children(node, rack, s))
      if (!incumbent || child.bound < incumbent_cost) open.push(std::move(child));
    SearchNode commit = std::move(node);
    commit.committed[s] |= bit(rack);
    commit.depth += 1;
    commit.seq = ++seq;
    if (commitments_fit(instance, commit)) open.push(std::move(commit));
  }

  plan.stats.nodes_explored = nodes;
  plan.stats.solve_seconds = elapsed();
  if (!incumbent) {
    plan.status = SolveStatus::kInfeasible;
    plan.stats.optimal = exhausted;
    return plan;
  }
  check_invariant(satisfies_constraints(instance, *incumbent), "solver returned infeasible plan");
  check_invariant(migration_distance(instance, *incumbent) == incumbent_cost,
                  "solver cost disagrees with l1 distance");
  plan.status = exhausted ? SolveStatus::kOptimal : SolveStatus::kFeasible;
  plan.target = std::move(*incumbent);
  plan.move_count = incumbent_cost;
  plan.moves = decompose_moves(instance, plan.target);
  plan.stats.move_count = incumbent_cost;
  plan.stats.optimal = exhausted;
  return plan;
}

namespace detail {

inline double compositions(int total, int parts) {
  // C(total + parts - 1, parts - 1)
  double r = 1;
  for (int i = 1; i < parts; ++i) r = r * (total + i) / i;
  return r;
}

class BruteForce {
 public:
  explicit BruteForce(const SolverInstance& instance)
      : instance_(instance),
        w_(instance.jobs.size(), std::vector<int>(instance.racks, 0)),
        load_(instance.racks, 0),
        degree_(instance.fixed_degree) {}

  std::optional<int> run() {
    for (int d : degree_)
      if (d > instance_.threshold) return std::nullopt;
    place_job(0, 0);
    return best_;
  }

 private:
  void place_job(std::size_t s, int cost) {
    if (best_ && cost >= *best_) return;
    if (s == instance_.jobs.size()) {
      best_ = cost;
      return;
    }
    fill(s, 0, instance_.jobs[s].size, cost);
  }

  void fill(std::size_t s, int t, int remaining, int cost) {
    const int racks = instance_.racks;
    if (t == racks - 1) {
      if (remaining > instance_.capacity(t) - load_[t]) return;
      set(s, t, remaining);
      finish_job(s, cost);
      set(s, t, 0);
      return;
    }
    const int upto = std::min(remaining, instance_.capacity(t) - load_[t]);
    for (int n = 0; n <= upto; ++n) {
      set(s, t, n);
      fill(s, t + 1, remaining - n, cost);
    }
    set(s, t, 0);
  }

  void finish_job(std::size_t s, int cost) {
    const auto& job = instance_.jobs[s];
    int moved = 0, spanned = 0;
    for (int t = 0; t < instance_.racks; ++t) {
      moved += std::max(0, job.initial[t] - w_[s][t]);
      spanned += w_[s][t] > 0;
    }
    if (spanned >= 2) {
      bool ok = true;
      for (int t = 0; t < instance_.racks; ++t) {
        if (w_[s][t] > 0) degree_[t] += job.rings;
        if (degree_[t] > instance_.threshold) ok = false;
      }
      if (ok) place_job(s + 1, cost + moved);
      for (int t = 0; t < instance_.racks; ++t)
        if (w_[s][t] > 0) degree_[t] -= job.rings;
    } else {
      place_job(s + 1, cost + moved);
    }
  }

  void set(std::size_t s, int t, int n) {
    load_[t] += n - w_[s][t];
    w_[s][t] = n;
  }

  const SolverInstance& instance_;
  RackMatrix w_;
  std::vector<int> load_;
  std::vector<int> degree_;
  std::optional<int> best_;
};

}  // namespace detail

inline std::optional<int> brute_force_min_moves(const SolverInstance& instance, long max_states) {
  instance.validate();
  double states = 1;
  for (const auto& j : instance.jobs) {
    states *= detail::compositions(j.size, instance.racks);
    if (states > static_cast<double>(max_states))
      throw std::length_error("brute_force_min_moves: instance too large");
  }
  return detail::BruteForce(instance).run();
}

inline nlohmann::json instance_to_json(const SolverInstance& instance) {
  nlohmann::json jobs = nlohmann::json::array();
  for (const auto& j : instance.jobs)
    jobs.push_back({{"id", j.id}, {"stage", j.stage}, {"size", j.size}, {"rings", j.rings},
                    {"initial", j.initial}});
  return {{"racks", instance.racks},
          {"rack_capacity", instance.rack_capacity},
          {"threshold", instance.threshold},
          {"reserved", instance.reserved},
          {"fixed_degree", instance.fixed_degree},
          {"jobs", jobs}};
}

inline SolverInstance instance_from_json(const nlohmann::json& j) {
  SolverInstance inst;
  try {
    inst.racks = j.at("racks").get<int>();
    inst.rack_capacity = j.at("rack_capacity").get<int>();
    inst.threshold = j.at("threshold").get<int>();
    inst.reserved = j.value("reserved", std::vector<int>(inst.racks, 0));
    inst.fixed_degree = j.value("fixed_degree", std::vector<int>(inst.racks, 0));
    for (const auto& jj : j.at("jobs")) {
      SolverJob job;
      job.id = jj.value("id", static_cast<JobId>(inst.jobs.size()));
      job.stage = jj.value("stage", 0);
      job.initial = jj.at("initial").get<std::vector<int>>();
      int sum = 0;
      for (int v : job.initial) sum += v;
      job.size = jj.value("size", sum);
      job.rings = jj.value("rings", 1);
      inst.jobs.push_back(std::move(job));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("solver instance: ") + e.what());
  }
  inst.validate();
  return inst;
}

}  // namespace defragsim

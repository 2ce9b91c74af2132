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
#include <compare>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "defragsim/core.hpp"
#include "defragsim/topology.hpp"

namespace defragsim {

/// One independently placed piece of a job: a pipeline stage. Jobs without
/// pipeline parallelism have a single stage 0. Every stage carries `rings`
/// replica groups (its TP degree), all spanning the same racks.
struct UnitKey {
  JobId job = 0;
  int stage = 0;
  auto operator<=>(const UnitKey&) const = default;
};

/// A whole-host relocation of one unit's worker.
struct HostMove {
  UnitKey unit;
  int from_host = 0;
  int to_host = 0;
};

/// Host-granular worker placement plus the rack aggregate w(unit, rack).
/// Per-rack fragmentation degrees are maintained incrementally.
class Placement {
 public:
  explicit Placement(const ClusterTopology& topology);

  const ClusterTopology& topology() const { return *topology_; }

  bool is_free(int host) const { return !host_owner_.at(host).has_value(); }
  const std::optional<UnitKey>& owner(int host) const { return host_owner_.at(host); }
  int free_hosts_in_rack(int rack) const { return free_per_rack_.at(rack); }
  int total_free_hosts() const;
  /// Free hosts of a rack in ascending index order.
  std::vector<int> free_hosts_of_rack(int rack) const;

  /// Places a job; stage_hosts[i] are the hosts of pipeline stage i.
  void assign(JobId job, const std::vector<std::vector<int>>& stage_hosts, int rings_per_stage);
  /// Frees every host of the job. Throws std::out_of_range for unknown jobs.
  void release(JobId job);
  /// Applies host moves atomically: all sources are vacated before any
  /// destination is claimed, so swaps and chains are allowed.
  void apply_moves(const std::vector<HostMove>& moves);

  bool contains(JobId job) const { return jobs_.contains(job); }
  std::vector<JobId> jobs() const;
  const std::vector<std::vector<int>>& stages(JobId job) const { return jobs_.at(job).stage_hosts; }
  int rings(JobId job) const { return jobs_.at(job).rings; }
  std::vector<UnitKey> units() const;
  const std::vector<int>& hosts_of(UnitKey unit) const;

  /// w(unit, t) for every rack t.
  const std::vector<int>& rack_counts(UnitKey unit) const;
  int racks_spanned(UnitKey unit) const;
  bool fragmented(UnitKey unit) const { return racks_spanned(unit) >= 2; }

  /// Incrementally maintained fragmentation degree of a rack.
  int degree(int rack) const { return degree_.at(rack); }
  const std::vector<int>& degrees() const { return degree_; }

  bool operator==(const Placement& other) const {
    return host_owner_ == other.host_owner_ && jobs_ == other.jobs_;
  }

 private:
  struct JobEntry {
    std::vector<std::vector<int>> stage_hosts;
    std::vector<std::vector<int>> stage_rack_counts;
    int rings = 1;
    bool operator==(const JobEntry&) const = default;
  };

  void add_degree(const JobEntry& entry, int stage, int sign);
  void recount_stage(JobEntry& entry, int stage);

  const ClusterTopology* topology_;
  std::vector<std::optional<UnitKey>> host_owner_;
  std::vector<int> free_per_rack_;
  std::vector<int> degree_;
  std::map<JobId, JobEntry> jobs_;
};

// ---------------------------------------------------------------------------

inline Placement::Placement(const ClusterTopology& topology)
    : topology_(&topology),
      host_owner_(topology.total_hosts()),
      free_per_rack_(topology.num_racks(), topology.hosts_per_rack()),
      degree_(topology.num_racks(), 0) {}

inline int Placement::total_free_hosts() const {
  int n = 0;
  for (int f : free_per_rack_) n += f;
  return n;
}

inline std::vector<int> Placement::free_hosts_of_rack(int rack) const {
  std::vector<int> out;
  const int first = topology_->first_host_of_rack(rack);
  for (int h = first; h < first + topology_->hosts_per_rack(); ++h)
    if (is_free(h)) out.push_back(h);
  return out;
}

inline std::vector<JobId> Placement::jobs() const {
  std::vector<JobId> out;
  out.reserve(jobs_.size());
  for (const auto& [id, _] : jobs_) out.push_back(id);
  return out;
}

inline std::vector<UnitKey> Placement::units() const {
  std::vector<UnitKey> out;
  for (const auto& [id, entry] : jobs_)
    for (int s = 0; s < static_cast<int>(entry.stage_hosts.size()); ++s) out.push_back({id, s});
  return out;
}

inline const std::vector<int>& Placement::hosts_of(UnitKey unit) const {
  return jobs_.at(unit.job).stage_hosts.at(unit.stage);
}

inline const std::vector<int>& Placement::rack_counts(UnitKey unit) const {
  return jobs_.at(unit.job).stage_rack_counts.at(unit.stage);
}

inline int Placement::racks_spanned(UnitKey unit) const {
  const auto& counts = rack_counts(unit);
  return static_cast<int>(std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }));
}

inline void Placement::add_degree(const JobEntry& entry, int stage, int sign) {
  const auto& counts = entry.stage_rack_counts[stage];
  const auto spanned = std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; });
  if (spanned < 2) return;
  for (std::size_t t = 0; t < counts.size(); ++t)
    if (counts[t] > 0) degree_[t] += sign * entry.rings;
}

inline void Placement::recount_stage(JobEntry& entry, int stage) {
  auto& counts = entry.stage_rack_counts[stage];
  counts.assign(topology_->num_racks(), 0);
  for (int h : entry.stage_hosts[stage]) ++counts[topology_->rack_of_host(h)];
}

inline void Placement::assign(JobId job, const std::vector<std::vector<int>>& stage_hosts,
                              int rings_per_stage) {
  if (jobs_.contains(job)) throw std::invalid_argument("assign: job already placed");
  if (stage_hosts.empty()) throw std::invalid_argument("assign: job has no stages");
  if (rings_per_stage < 1) throw std::invalid_argument("assign: rings_per_stage < 1");
  for (const auto& hosts : stage_hosts) {
    if (hosts.empty()) throw std::invalid_argument("assign: empty stage");
    for (int h : hosts) {
      if (h < 0 || h >= topology_->total_hosts()) throw std::out_of_range("assign: bad host");
      if (!is_free(h)) throw std::invalid_argument("assign: host already occupied");
    }
  }
  JobEntry entry;
  entry.stage_hosts = stage_hosts;
  entry.stage_rack_counts.resize(stage_hosts.size());
  entry.rings = rings_per_stage;
  for (int s = 0; s < static_cast<int>(stage_hosts.size()); ++s) {
    for (int h : stage_hosts[s]) {
      if (!is_free(h)) throw std::invalid_argument("assign: host listed twice");
      host_owner_[h] = UnitKey{job, s};
      --free_per_rack_[topology_->rack_of_host(h)];
    }
    recount_stage(entry, s);
    add_degree(entry, s, +1);
  }
  jobs_.emplace(job, std::move(entry));
}

inline void Placement::release(JobId job) {
  auto it = jobs_.find(job);
  if (it == jobs_.end()) throw std::out_of_range("release: unknown job");
  for (int s = 0; s < static_cast<int>(it->second.stage_hosts.size()); ++s) {
    add_degree(it->second, s, -1);
    for (int h : it->second.stage_hosts[s]) {
      host_owner_[h].reset();
      ++free_per_rack_[topology_->rack_of_host(h)];
    }
  }
  jobs_.erase(it);
}

inline void Placement::apply_moves(const std::vector<HostMove>& moves) {
  std::vector<char> vacated(host_owner_.size(), 0);
  for (const auto& m : moves) {
    const auto& own = host_owner_.at(m.from_host);
    if (!own || *own != m.unit) throw std::invalid_argument("apply_moves: source not owned by unit");
    if (vacated[m.from_host]) throw std::invalid_argument("apply_moves: source listed twice");
    vacated[m.from_host] = 1;
  }
  std::vector<char> claimed(host_owner_.size(), 0);
  for (const auto& m : moves) {
    if (claimed.at(m.to_host)) throw std::invalid_argument("apply_moves: destination listed twice");
    if (!is_free(m.to_host) && !vacated[m.to_host])
      throw std::invalid_argument("apply_moves: destination occupied");
    claimed[m.to_host] = 1;
  }
  std::map<UnitKey, int> touched;
  for (const auto& m : moves) touched[m.unit] = 0;
  for (const auto& [unit, _] : touched) add_degree(jobs_.at(unit.job), unit.stage, -1);
  for (const auto& m : moves) {
    host_owner_[m.from_host].reset();
    ++free_per_rack_[topology_->rack_of_host(m.from_host)];
  }
  std::map<UnitKey, std::map<int, int>> remap;
  for (const auto& m : moves) {
    host_owner_[m.to_host] = m.unit;
    --free_per_rack_[topology_->rack_of_host(m.to_host)];
    remap[m.unit][m.from_host] = m.to_host;
  }
  for (const auto& [unit, mapping] : remap) {
    for (int& h : jobs_.at(unit.job).stage_hosts.at(unit.stage)) {
      auto it = mapping.find(h);
      if (it != mapping.end()) h = it->second;
    }
  }
  for (const auto& [unit, _] : touched) {
    auto& entry = jobs_.at(unit.job);
    recount_stage(entry, unit.stage);
    add_degree(entry, unit.stage, +1);
  }
}

}  // namespace defragsim

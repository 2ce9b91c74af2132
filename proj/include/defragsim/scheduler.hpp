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

#include <deque>
#include <optional>
#include <vector>

#include "defragsim/placement.hpp"
#include "defragsim/workload.hpp"

namespace defragsim {

/// Locality-aware host selection. If some rack can hold all `hosts_needed`,
/// use the fitting rack with the fewest free hosts; otherwise take everything
/// on the rack with the most free hosts and recurse on the remainder. Ties go
/// to the lowest rack index, hosts are taken in index order. Returns nullopt
/// when the cluster lacks capacity.
std::optional<std::vector<int>> choose_hosts(const Placement& placement, int hosts_needed);

/// Splits an ordered host list into contiguous pipeline stages.
std::vector<std::vector<int>> split_into_stages(const std::vector<int>& hosts, int stages);

/// Slurm-like baseline scheduler with a strict FIFO queue (no backfilling).
class Scheduler {
 public:
  /// Places the job, or queues it when it does not fit or others are waiting.
  /// Returns true when the job was placed.
  bool place_job(Placement& placement, const JobSpec& job);

  /// Frees the job's hosts, then admits queued jobs in FIFO order while the
  /// head fits. Returns the jobs admitted (already placed).
  std::vector<JobSpec> release_job(Placement& placement, JobId job);

  const std::deque<JobSpec>& queue() const { return queue_; }

 private:
  bool try_place(Placement& placement, const JobSpec& job) const;

  std::deque<JobSpec> queue_;
};

// ---------------------------------------------------------------------------

inline std::optional<std::vector<int>> choose_hosts(const Placement& placement, int hosts_needed) {
  if (hosts_needed < 1) return std::vector<int>{};
  if (placement.total_free_hosts() < hosts_needed) return std::nullopt;
  const int racks = placement.topology().num_racks();
  std::vector<int> free(racks);
  for (int r = 0; r < racks; ++r) free[r] = placement.free_hosts_in_rack(r);

  std::vector<int> chosen;
  int remaining = hosts_needed;
  while (remaining > 0) {
    int fit = -1;
    for (int r = 0; r < racks; ++r)
      if (free[r] >= remaining && (fit < 0 || free[r] < free[fit])) fit = r;
    const int rack = fit >= 0 ? fit : static_cast<int>(std::max_element(free.begin(), free.end()) -
                                                       free.begin());
    const int take = std::min(remaining, free[rack]);
    const auto hosts = placement.free_hosts_of_rack(rack);
    chosen.insert(chosen.end(), hosts.begin(), hosts.begin() + take);
    free[rack] -= take;
    remaining -= take;
  }
  return chosen;
}

inline std::vector<std::vector<int>> split_into_stages(const std::vector<int>& hosts, int stages) {
  if (stages < 1 || hosts.size() % stages != 0)
    throw std::invalid_argument("split_into_stages: uneven split");
  const std::size_t per = hosts.size() / stages;
  std::vector<std::vector<int>> out(stages);
  for (int s = 0; s < stages; ++s)
    out[s].assign(hosts.begin() + s * per, hosts.begin() + (s + 1) * per);
  return out;
}

inline bool Scheduler::try_place(Placement& placement, const JobSpec& job) const {
  const auto hosts = choose_hosts(placement, hosts_for_job(job, placement.topology()));
  if (!hosts) return false;
  placement.assign(job.id, split_into_stages(*hosts, job.pp_degree), job.tp_degree);
  return true;
}

inline bool Scheduler::place_job(Placement& placement, const JobSpec& job) {
  if (queue_.empty() && try_place(placement, job)) return true;
  queue_.push_back(job);
  return false;
}

inline std::vector<JobSpec> Scheduler::release_job(Placement& placement, JobId job) {
  placement.release(job);
  std::vector<JobSpec> admitted;
  while (!queue_.empty() && try_place(placement, queue_.front())) {
    admitted.push_back(queue_.front());
    queue_.pop_front();
  }
  return admitted;
}

}  // namespace defragsim

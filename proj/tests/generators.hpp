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

// Hand-rolled random instance generators shared by the unit and acceptance
// suites. Every generator is a pure function of the RNG state.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "defragsim/fragmentation.hpp"
#include "defragsim/solver.hpp"

namespace defragsim::testing {

using Rng = std::mt19937_64;

inline int uniform(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

struct ClusterShape {
  int racks = 1;
  int hosts_per_rack = 1;
};

inline ClusterShape random_shape(Rng& rng) { return {uniform(rng, 2, 16), uniform(rng, 1, 8)}; }

inline ClusterTopology make_topology(const ClusterShape& s, int uplinks = 8) {
  return ClusterTopology::make_two_tier(s.racks, s.hosts_per_rack, 8, uplinks, 400 * kGbps,
                                        400 * kGbps, uplinks);
}

/// Jobs of random host counts whose total stays within `capacity`; sizes are
/// biased so that some exceed a rack.
inline std::vector<SizedJob> random_jobs(Rng& rng, int capacity, int hosts_per_rack,
                                         const std::vector<int>& ring_menu) {
  std::vector<SizedJob> jobs;
  const int target = uniform(rng, 1, capacity);
  int used = 0;
  JobId id = 0;
  while (used < target) {
    const int size = std::min(target - used, uniform(rng, 1, 3 * hosts_per_rack));
    const int rings = ring_menu[uniform(rng, 0, static_cast<int>(ring_menu.size()) - 1)];
    jobs.push_back({id++, size, rings});
    used += size;
  }
  return jobs;
}

/// A random rack-level instance whose initial state fits capacity and conserves job sizes.
inline SolverInstance random_instance(Rng& rng, int racks, int capacity, int jobs, int threshold,
                                      int max_rings = 1) {
  SolverInstance in;
  in.racks = racks;
  in.rack_capacity = capacity;
  in.threshold = threshold;
  in.reserved.assign(racks, 0);
  in.fixed_degree.assign(racks, 0);
  std::vector<int> free(racks, capacity);
  int left = racks * capacity;
  for (int j = 0; j < jobs && left > 0; ++j) {
    SolverJob job;
    job.id = j;
    job.rings = uniform(rng, 1, max_rings);
    job.size = uniform(rng, 1, std::min(left, capacity + 2));
    job.initial.assign(racks, 0);
    for (int w = 0; w < job.size; ++w) {
      int t;
      do t = uniform(rng, 0, racks - 1);
      while (free[t] == 0);
      --free[t];
      ++job.initial[t];
    }
    left -= job.size;
    in.jobs.push_back(std::move(job));
  }
  return in;
}

}  // namespace defragsim::testing

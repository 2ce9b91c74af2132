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

#include <limits>
#include <vector>

#include "defragsim/placement.hpp"

namespace defragsim {

/// Threshold value meaning "never violated".
inline constexpr int kUnboundedThreshold = std::numeric_limits<int>::max();

struct FragmentationReport {
  /// DP flows leaving each rack for destinations outside it.
  std::vector<int> per_rack;
  /// Replica groups spanning two or more racks, cluster-wide.
  int fragmented_groups = 0;
  int max_degree = 0;
};

/// Recomputes degrees from scratch: every unit spanning k >= 2 racks adds its
/// ring count to each of those racks.
FragmentationReport fragmentation_degree(const Placement& placement);

/// Racks whose degree exceeds `threshold`.
std::vector<int> threshold_violated(const FragmentationReport& report, int threshold);

struct SizedJob {
  JobId id = 0;
  int hosts = 1;
  int rings = 1;
};

/// Left-to-right packing in the given order. Every rack ends up with at most
/// one job continuing from the left and one continuing to the right, so the
/// degree never exceeds 2 * max rings. Throws ConfigError on overflow.
Placement sequential_placement(const std::vector<SizedJob>& jobs, const ClusterTopology& topology);

// ---------------------------------------------------------------------------

inline FragmentationReport fragmentation_degree(const Placement& placement) {
  FragmentationReport report;
  report.per_rack.assign(placement.topology().num_racks(), 0);
  for (const auto& unit : placement.units()) {
    const auto& counts = placement.rack_counts(unit);
    int spanned = 0;
    for (int c : counts) spanned += c > 0;
    if (spanned < 2) continue;
    const int rings = placement.rings(unit.job);
    report.fragmented_groups += rings;
    for (std::size_t t = 0; t < counts.size(); ++t)
      if (counts[t] > 0) report.per_rack[t] += rings;
  }
  for (int d : report.per_rack) report.max_degree = std::max(report.max_degree, d);
  return report;
}

inline std::vector<int> threshold_violated(const FragmentationReport& report, int threshold) {
  std::vector<int> racks;
  for (std::size_t t = 0; t < report.per_rack.size(); ++t)
    if (report.per_rack[t] > threshold) racks.push_back(static_cast<int>(t));
  return racks;
}

inline Placement sequential_placement(const std::vector<SizedJob>& jobs,
                                      const ClusterTopology& topology) {
  long total = 0;
  for (const auto& j : jobs) total += j.hosts;
  if (total > topology.total_hosts()) throw ConfigError("sequential_placement: capacity exceeded");
  Placement placement(topology);
  int next = 0;
  for (const auto& j : jobs) {
    std::vector<int> hosts(j.hosts);
    for (int& h : hosts) h = next++;
    placement.assign(j.id, {hosts}, j.rings);
  }
  return placement;
}

}  // namespace defragsim

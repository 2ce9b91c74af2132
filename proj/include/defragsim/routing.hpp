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
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "defragsim/core.hpp"
#include "defragsim/matching.hpp"

namespace defragsim {

/// Identifies one cross-rack hop of one DP ring.
struct FlowKey {
  JobId job = 0;
  int stage = 0;
  int tp_rank = 0;
  int hop = 0;
  auto operator<=>(const FlowKey&) const = default;
};

struct DpDemand {
  FlowKey key;
  int src_rack = 0;
  int dst_rack = 0;
  int src_gpu = 0;
  int dst_gpu = 0;
  double utilization = 0;  // owning job's compute share, used by Crux ordering
};

struct RouteEntry {
  int src_rack = 0;
  int dst_rack = 0;
  int uplink = 0;
};

/// Uplink (color) per DP flow. A flow leaves its source ToR on uplink c and
/// enters its destination ToR on downlink c.
using RoutingTable = std::map<FlowKey, RouteEntry>;

enum class RoutingScheme { kPerfect, kEcmp, kCrux, kSglb, kSpray };

struct Algorithm {
  std::string name;
  RoutingScheme routing = RoutingScheme::kPerfect;
  bool migration = false;
};

inline const std::vector<Algorithm>& known_algorithms() {
  static const std::vector<Algorithm> all = {
      {"monkeytree", RoutingScheme::kPerfect, true},
      {"perfect-only", RoutingScheme::kPerfect, false},
      {"ecmp", RoutingScheme::kEcmp, false},
      {"crux", RoutingScheme::kCrux, false},
      {"sglb", RoutingScheme::kSglb, false},
      {"spray", RoutingScheme::kSpray, false},
      {"monkeytree-ecmp", RoutingScheme::kEcmp, true},
      {"monkeytree-crux", RoutingScheme::kCrux, true},
  };
  return all;
}

inline Algorithm algorithm_from_name(const std::string& name) {
  for (const auto& a : known_algorithms())
    if (a.name == name) return a;
  throw ConfigError("unknown algorithm '" + name + "'");
}

/// Proper coloring with `k` colors in which every vertex sees each color
/// floor(d/k) or ceil(d/k) times: each vertex is split into copies of at most
/// k edges and the split graph is colored.
inline std::vector<int> equitable_coloring(int vertices, const std::vector<std::pair<int, int>>& edges,
                                           int k) {
  std::vector<int> seen_l(vertices, 0), seen_r(vertices, 0), copies_l(vertices, 0), copies_r(vertices, 0);
  for (const auto& [u, v] : edges) {
    ++copies_l[u];
    ++copies_r[v];
  }
  std::vector<int> base_l(vertices + 1, 0), base_r(vertices + 1, 0);
  for (int v = 0; v < vertices; ++v) {
    base_l[v + 1] = base_l[v] + (copies_l[v] + k - 1) / k;
    base_r[v + 1] = base_r[v] + (copies_r[v] + k - 1) / k;
  }
  std::vector<std::pair<int, int>> split;
  split.reserve(edges.size());
  for (const auto& [u, v] : edges) split.push_back({base_l[u] + seen_l[u]++ / k, base_r[v] + seen_r[v]++ / k});
  return color_bipartite(base_l[vertices], base_r[vertices], split).colors;
}

/// Edge coloring of the ToR-to-ToR demand multigraph. When the coloring needs
/// more colors than there are uplinks, the colors are collapsed onto the
/// uplinks so that each ToR spreads its flows evenly across them.
inline RoutingTable perfect_route(const std::vector<DpDemand>& demands, int racks, int uplinks) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(demands.size());
  for (const auto& d : demands) edges.push_back({d.src_rack, d.dst_rack});
  auto coloring = color_bipartite(racks, racks, edges);
  if (coloring.num_colors > uplinks) coloring.colors = equitable_coloring(racks, edges, uplinks);
  RoutingTable table;
  for (std::size_t i = 0; i < demands.size(); ++i)
    table[demands[i].key] = {demands[i].src_rack, demands[i].dst_rack, coloring.colors[i]};
  return table;
}

/// Stable hash of the synthetic 5-tuple (job, group, src, dst, port).
inline int ecmp_uplink(const FlowKey& key, int src_gpu, int dst_gpu, int uplinks) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(key.job));
  h = mix64(h ^ (static_cast<std::uint64_t>(key.stage) << 32 | static_cast<std::uint32_t>(key.tp_rank)));
  h = mix64(h ^ static_cast<std::uint64_t>(src_gpu));
  h = mix64(h ^ static_cast<std::uint64_t>(dst_gpu));
  h = mix64(h ^ (4791u + static_cast<std::uint64_t>(key.hop)));
  return static_cast<int>(h % static_cast<std::uint64_t>(uplinks));
}

inline RoutingTable ecmp_route(const std::vector<DpDemand>& demands, int uplinks) {
  RoutingTable table;
  for (const auto& d : demands)
    table[d.key] = {d.src_rack, d.dst_rack, ecmp_uplink(d.key, d.src_gpu, d.dst_gpu, uplinks)};
  return table;
}

/// Jobs in descending utilization order (ties by id), each flow greedily on
/// the uplink whose busier end carries the fewest flows so far.
inline RoutingTable crux_route(const std::vector<DpDemand>& demands, int racks, int uplinks) {
  std::vector<const DpDemand*> order;
  order.reserve(demands.size());
  for (const auto& d : demands) order.push_back(&d);
  std::stable_sort(order.begin(), order.end(), [](const DpDemand* a, const DpDemand* b) {
    if (a->utilization != b->utilization) return a->utilization > b->utilization;
    return a->key < b->key;
  });
  std::vector<std::vector<int>> up(racks, std::vector<int>(uplinks, 0));
  std::vector<std::vector<int>> down = up;
  RoutingTable table;
  for (const DpDemand* d : order) {
    int best = 0, best_load = 0;
    for (int c = 0; c < uplinks; ++c) {
      const int load = std::max(up[d->src_rack][c], down[d->dst_rack][c]);
      if (c == 0 || load < best_load) {
        best = c;
        best_load = load;
      }
    }
    ++up[d->src_rack][best];
    ++down[d->dst_rack][best];
    table[d->key] = {d->src_rack, d->dst_rack, best};
  }
  return table;
}

struct SglbFlow {
  int src_rack = 0;
  int dst_rack = 0;
  int uplink = 0;
};

struct SglbMove {
  std::size_t flow = 0;
  int from = 0;
  int to = 0;
};

/// One rebalancing epoch over the active DP flows. For every ToR uplink whose
/// flow count exceeds hysteresis x the ToR mean, at most one flow moves to the
/// uplink with the lowest combined source-up and destination-down count, and
/// only when that strictly lowers the combined count. Updates `flows` in place.
inline std::vector<SglbMove> sglb_step(std::vector<SglbFlow>& flows, int racks, int uplinks,
                                       double hysteresis) {
  std::vector<std::vector<int>> up(racks, std::vector<int>(uplinks, 0));
  std::vector<std::vector<int>> down = up;
  std::vector<int> per_tor(racks, 0);
  for (const auto& f : flows) {
    ++up[f.src_rack][f.uplink];
    ++down[f.dst_rack][f.uplink];
    ++per_tor[f.src_rack];
  }
  std::vector<SglbMove> moves;
  for (int tor = 0; tor < racks; ++tor) {
    const double mean = static_cast<double>(per_tor[tor]) / uplinks;
    for (int u = 0; u < uplinks; ++u) {
      if (up[tor][u] <= hysteresis * mean) continue;
      std::size_t pick = 0;
      int target = -1, gain = 0;
      for (std::size_t i = 0; i < flows.size(); ++i) {
        const auto& f = flows[i];
        if (f.src_rack != tor || f.uplink != u) continue;
        const int here = up[tor][u] + down[f.dst_rack][u];
        for (int v = 0; v < uplinks; ++v) {
          if (v == u) continue;
          const int g = here - (up[tor][v] + down[f.dst_rack][v] + 2);
          if (g > gain) {
            gain = g;
            pick = i;
            target = v;
          }
        }
      }
      if (target < 0) continue;
      auto& f = flows[pick];
      --up[tor][u];
      --down[f.dst_rack][u];
      ++up[tor][target];
      ++down[f.dst_rack][target];
      f.uplink = target;
      moves.push_back({pick, u, target});
    }
  }
  return moves;
}

/// Round-robin spine choice for mice flows, one cursor per source ToR.
class MiceRouter {
 public:
  MiceRouter(int racks, int uplinks) : uplinks_(uplinks), cursor_(racks, 0) {}
  int next(int src_rack) {
    const int c = cursor_.at(src_rack);
    cursor_[src_rack] = (c + 1) % uplinks_;
    return c;
  }

 private:
  int uplinks_;
  std::vector<int> cursor_;
};

/// True when no uplink, in either direction, carries two of the given flows.
inline bool isolated(const std::vector<SglbFlow>& flows, int racks, int uplinks) {
  std::vector<std::vector<int>> up(racks, std::vector<int>(uplinks, 0));
  std::vector<std::vector<int>> down = up;
  for (const auto& f : flows)
    if (++up[f.src_rack][f.uplink] > 1 || ++down[f.dst_rack][f.uplink] > 1) return false;
  return true;
}

}  // namespace defragsim

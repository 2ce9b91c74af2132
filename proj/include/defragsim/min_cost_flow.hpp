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
#include <deque>
#include <limits>
#include <utility>
#include <vector>

namespace defragsim {

/// Integer min-cost flow by successive shortest paths. Path search is
/// queue-based Bellman-Ford, so arcs may carry negative cost as long as the
/// initial residual graph has no negative cycle.
class MinCostFlow {
 public:
  static constexpr int kInfinite = std::numeric_limits<int>::max() / 4;

  explicit MinCostFlow(int nodes) : adjacency_(nodes) {}

  /// Returns the arc id; its flow is readable through flow().
  int add_edge(int from, int to, int capacity, int cost) {
    const int id = static_cast<int>(arcs_.size());
    arcs_.push_back({to, capacity, cost, capacity});
    arcs_.push_back({from, 0, -cost, 0});
    adjacency_[from].push_back(id);
    adjacency_[to].push_back(id + 1);
    return id;
  }

  int flow(int arc) const { return arcs_[arc].initial - arcs_[arc].residual; }

  /// Sends up to `limit` units from source to sink at minimum cost.
  /// Returns (flow sent, total cost).
  std::pair<int, long> run(int source, int sink, int limit) {
    const int n = static_cast<int>(adjacency_.size());
    std::vector<long> dist(n);
    std::vector<int> via(n);
    std::vector<char> queued(n);
    int sent = 0;
    long cost = 0;
    while (sent < limit) {
      std::fill(dist.begin(), dist.end(), std::numeric_limits<long>::max());
      std::fill(via.begin(), via.end(), -1);
      std::deque<int> queue{source};
      dist[source] = 0;
      queued.assign(n, 0);
      queued[source] = 1;
      while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        queued[u] = 0;
        for (int id : adjacency_[u]) {
          const Arc& a = arcs_[id];
          if (a.residual <= 0) continue;
          const long nd = dist[u] + a.cost;
          if (nd < dist[a.to]) {
            dist[a.to] = nd;
            via[a.to] = id;
            if (!queued[a.to]) {
              queued[a.to] = 1;
              queue.push_back(a.to);
            }
          }
        }
      }
      if (via[sink] < 0) break;
      int push = limit - sent;
      for (int v = sink; v != source; v = arcs_[via[v] ^ 1].to)
        push = std::min(push, arcs_[via[v]].residual);
      for (int v = sink; v != source; v = arcs_[via[v] ^ 1].to) {
        arcs_[via[v]].residual -= push;
        arcs_[via[v] ^ 1].residual += push;
      }
      sent += push;
      cost += static_cast<long>(push) * dist[sink];
    }
    return {sent, cost};
  }

 private:
  struct Arc {
    int to;
    int residual;
    int cost;
    int initial;
  };
  std::vector<Arc> arcs_;
  std::vector<std::vector<int>> adjacency_;
};

}  // namespace defragsim

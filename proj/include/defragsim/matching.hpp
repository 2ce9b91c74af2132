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
#include <limits>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

namespace defragsim {

/// Maximum bipartite matching on a multigraph by Hopcroft-Karp. Edges are
/// identified by index so parallel edges stay distinguishable.
class HopcroftKarp {
 public:
  HopcroftKarp(int left, int right) : left_(left), right_(right), adjacency_(left) {}

  int add_edge(int u, int v) {
    if (u < 0 || u >= left_ || v < 0 || v >= right_)
      throw std::out_of_range("HopcroftKarp::add_edge: vertex out of range");
    const int id = static_cast<int>(ends_.size());
    ends_.push_back({u, v});
    adjacency_[u].push_back(id);
    return id;
  }

  /// Edge ids of a maximum matching, indexed by left vertex (-1 if unmatched).
  std::vector<int> solve() {
    match_left_.assign(left_, -1);
    match_right_.assign(right_, -1);
    while (layer()) {
      next_.assign(left_, 0);
      for (int u = 0; u < left_; ++u)
        if (match_left_[u] < 0) augment(u);
    }
    return match_left_;
  }

  std::pair<int, int> ends(int edge) const { return ends_[edge]; }

 private:
  static constexpr int kUnreached = std::numeric_limits<int>::max();

  bool layer() {
    dist_.assign(left_, kUnreached);
    std::queue<int> q;
    for (int u = 0; u < left_; ++u)
      if (match_left_[u] < 0) {
        dist_[u] = 0;
        q.push(u);
      }
    bool found = false;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int e : adjacency_[u]) {
        const int w = match_right_[ends_[e].second];
        if (w < 0) {
          found = true;
        } else {
          const int partner = ends_[w].first;
          if (dist_[partner] == kUnreached) {
            dist_[partner] = dist_[u] + 1;
            q.push(partner);
          }
        }
      }
    }
    return found;
  }

  bool augment(int u) {
    for (int& i = next_[u]; i < static_cast<int>(adjacency_[u].size()); ++i) {
      const int e = adjacency_[u][i];
      const int v = ends_[e].second;
      const int w = match_right_[v];
      if (w < 0 || (dist_[ends_[w].first] == dist_[u] + 1 && augment(ends_[w].first))) {
        match_left_[u] = e;
        match_right_[v] = e;
        return true;
      }
    }
    dist_[u] = kUnreached;
    return false;
  }

  int left_, right_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<std::pair<int, int>> ends_;
  std::vector<int> match_left_, match_right_, dist_, next_;
};

struct EdgeColoring {
  std::vector<int> colors;  // per input edge
  int num_colors = 0;       // equals the maximum vertex degree
};

/// Proper edge coloring of a bipartite multigraph with exactly max-degree
/// colors. The graph is padded to a regular multigraph and split into perfect
/// matchings, one per color.
inline EdgeColoring color_bipartite(int left, int right,
                                    const std::vector<std::pair<int, int>>& edges) {
  if (left < 0 || right < 0) throw std::invalid_argument("color_bipartite: negative side");
  const int n = std::max(left, right);
  std::vector<int> deg_l(n, 0), deg_r(n, 0);
  for (const auto& [u, v] : edges) {
    if (u < 0 || u >= left || v < 0 || v >= right)
      throw std::out_of_range("color_bipartite: vertex out of range");
    ++deg_l[u];
    ++deg_r[v];
  }
  EdgeColoring out;
  out.colors.assign(edges.size(), -1);
  int delta = 0;
  for (int i = 0; i < n; ++i) delta = std::max({delta, deg_l[i], deg_r[i]});
  out.num_colors = delta;
  if (delta == 0) return out;

  std::vector<std::pair<int, int>> all = edges;
  int u = 0, v = 0;
  while (true) {
    while (u < n && deg_l[u] == delta) ++u;
    while (v < n && deg_r[v] == delta) ++v;
    if (u == n || v == n) break;
    all.push_back({u, v});
    ++deg_l[u];
    ++deg_r[v];
  }

  std::vector<char> used(all.size(), 0);
  for (int color = 0; color < delta; ++color) {
    HopcroftKarp hk(n, n);
    std::vector<int> original;
    for (std::size_t e = 0; e < all.size(); ++e) {
      if (used[e]) continue;
      hk.add_edge(all[e].first, all[e].second);
      original.push_back(static_cast<int>(e));
    }
    const auto matching = hk.solve();
    for (int x = 0; x < n; ++x) {
      if (matching[x] < 0) throw std::logic_error("color_bipartite: regular graph lacks perfect matching");
      const int e = original[matching[x]];
      used[e] = 1;
      if (e < static_cast<int>(edges.size())) out.colors[e] = color;
    }
  }
  return out;
}

}  // namespace defragsim

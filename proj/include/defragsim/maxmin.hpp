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
#include <stdexcept>
#include <vector>

namespace defragsim {

/// Max-min fair rates by progressive filling: repeatedly find the link with
/// the smallest equal share among its unfrozen flows, give that share to
/// those flows, and freeze them. `paths` hold dense link indices.
inline std::vector<double> maxmin_rates(const std::vector<std::vector<int>>& paths,
                                        const std::vector<double>& capacities) {
  const std::size_t flows = paths.size();
  std::vector<double> rate(flows, 0.0);
  std::vector<double> residual = capacities;
  std::vector<int> unfrozen(capacities.size(), 0);
  std::vector<std::vector<int>> on_link(capacities.size());
  std::vector<int> links;
  for (std::size_t f = 0; f < flows; ++f) {
    if (paths[f].empty()) throw std::invalid_argument("maxmin_rates: empty path");
    for (int l : paths[f]) {
      if (l < 0 || static_cast<std::size_t>(l) >= capacities.size())
        throw std::out_of_range("maxmin_rates: link index out of range");
      if (unfrozen[l]++ == 0) links.push_back(l);
      on_link[l].push_back(static_cast<int>(f));
    }
  }
  std::vector<char> frozen(flows, 0);
  std::size_t remaining = flows;
  while (remaining > 0) {
    int bottleneck = -1;
    double share = std::numeric_limits<double>::infinity();
    for (int l : links) {
      if (unfrozen[l] == 0) continue;
      const double s = residual[l] / unfrozen[l];
      if (s < share) {
        share = s;
        bottleneck = l;
      }
    }
    if (share < 0) share = 0;
    for (int f : on_link[bottleneck]) {
      if (frozen[f]) continue;
      frozen[f] = 1;
      --remaining;
      rate[f] = share;
      for (int l : paths[f]) {
        residual[l] -= share;
        --unfrozen[l];
      }
    }
    residual[bottleneck] = 0;
  }
  return rate;
}

}  // namespace defragsim

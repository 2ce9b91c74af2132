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

#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "defragsim/core.hpp"

namespace defragsim {

enum class LinkKind : std::uint8_t {
  kHostNic,       // one per GPU; the GPU's own NIC
  kTorUplink,     // one per (ToR, uplink index)
  kTorAggregate,  // all uplinks of a ToR as one fluid pipe (packet spraying)
};

enum class Direction : std::uint8_t { kUp, kDown };

/// A directed, capacity-constrained link. For kHostNic, `index` is the global
/// GPU id; for kTorUplink it is the uplink index on `rack`; for kTorAggregate
/// it is unused (0).
struct LinkId {
  LinkKind kind = LinkKind::kHostNic;
  int rack = 0;
  int index = 0;
  Direction dir = Direction::kUp;

  auto operator<=>(const LinkId&) const = default;
};

std::string to_string(const LinkId& link);

/// Two-tier spine-leaf fabric. Only host NICs and ToR uplinks are capacity
/// constrained; switch fabrics are non-blocking. Uplink i of every ToR lands on
/// spine i mod num_spines, so an uplink index names the same spine cluster-wide.
class ClusterTopology {
 public:
  static ClusterTopology make_two_tier(int racks, int hosts_per_rack, int gpus_per_host,
                                       int uplinks_per_tor, double nic_bandwidth,
                                       double uplink_bandwidth, int num_spines);

  int num_racks() const { return num_racks_; }
  int hosts_per_rack() const { return hosts_per_rack_; }
  int gpus_per_host() const { return gpus_per_host_; }
  int uplinks_per_tor() const { return uplinks_per_tor_; }
  int num_spines() const { return num_spines_; }
  double nic_bandwidth() const { return nic_bandwidth_; }
  double uplink_bandwidth() const { return uplink_bandwidth_; }

  int total_hosts() const { return num_racks_ * hosts_per_rack_; }
  int total_gpus() const { return total_hosts() * gpus_per_host_; }
  int gpus_per_rack() const { return hosts_per_rack_ * gpus_per_host_; }

  /// Host NIC bandwidth under a ToR divided by its uplink bandwidth.
  double oversubscription() const {
    return (gpus_per_rack() * nic_bandwidth_) / (uplinks_per_tor_ * uplink_bandwidth_);
  }
  bool full_bisection() const { return oversubscription() <= 1.0 + 1e-12; }

  int spine_of_uplink(int uplink) const { return uplink % num_spines_; }

  // Global numbering: host = rack * hosts_per_rack + slot,
  // gpu = host * gpus_per_host + slot.
  int rack_of_host(int host) const { return host / hosts_per_rack_; }
  int host_of_gpu(int gpu) const { return gpu / gpus_per_host_; }
  int rack_of_gpu(int gpu) const { return rack_of_host(host_of_gpu(gpu)); }
  int first_host_of_rack(int rack) const { return rack * hosts_per_rack_; }
  int gpu_id(int host, int slot) const { return host * gpus_per_host_ + slot; }

  /// Links a flow from src_gpu to dst_gpu traverses. Same host: empty (the
  /// intra-host interconnect is not modeled). Same rack: NIC up, NIC down.
  /// Cross rack: NIC up, src uplink up, dst uplink down, NIC down.
  std::vector<LinkId> path_between(int src_gpu, int dst_gpu, int uplink_src,
                                   int uplink_dst) const;

  /// Cross-rack path through the aggregate ToR pipes used by packet spraying.
  std::vector<LinkId> spray_path(int src_gpu, int dst_gpu) const;

  // Dense link indexing for the flow engine.
  std::size_t num_links() const;
  std::size_t link_index(const LinkId& link) const;
  LinkId link_at(std::size_t index) const;
  double capacity(const LinkId& link) const;

 private:
  void check_gpu(int gpu) const;
  void check_uplink(int uplink) const;

  int num_racks_ = 0;
  int hosts_per_rack_ = 0;
  int gpus_per_host_ = 0;
  int uplinks_per_tor_ = 0;
  double nic_bandwidth_ = 0;
  double uplink_bandwidth_ = 0;
  int num_spines_ = 0;
};

// ---------------------------------------------------------------------------

inline std::string to_string(const LinkId& link) {
  std::string s;
  switch (link.kind) {
    case LinkKind::kHostNic: s = "nic" + std::to_string(link.index); break;
    case LinkKind::kTorUplink:
      s = "tor" + std::to_string(link.rack) + ".up" + std::to_string(link.index);
      break;
    case LinkKind::kTorAggregate: s = "tor" + std::to_string(link.rack) + ".agg"; break;
  }
  return s + (link.dir == Direction::kUp ? "/up" : "/down");
}

inline ClusterTopology ClusterTopology::make_two_tier(int racks, int hosts_per_rack,
                                                      int gpus_per_host, int uplinks_per_tor,
                                                      double nic_bandwidth,
                                                      double uplink_bandwidth, int num_spines) {
  if (racks < 1 || hosts_per_rack < 1 || gpus_per_host < 1 || uplinks_per_tor < 1 ||
      num_spines < 1)
    throw ConfigError("topology: all counts must be >= 1");
  if (!(nic_bandwidth > 0) || !(uplink_bandwidth > 0))
    throw ConfigError("topology: bandwidths must be > 0");
  if (uplinks_per_tor % num_spines != 0)
    throw ConfigError("topology: uplinks_per_tor must be a multiple of num_spines");
  ClusterTopology t;
  t.num_racks_ = racks;
  t.hosts_per_rack_ = hosts_per_rack;
  t.gpus_per_host_ = gpus_per_host;
  t.uplinks_per_tor_ = uplinks_per_tor;
  t.nic_bandwidth_ = nic_bandwidth;
  t.uplink_bandwidth_ = uplink_bandwidth;
  t.num_spines_ = num_spines;
  return t;
}

inline void ClusterTopology::check_gpu(int gpu) const {
  if (gpu < 0 || gpu >= total_gpus()) throw std::out_of_range("gpu index out of range");
}

inline void ClusterTopology::check_uplink(int uplink) const {
  if (uplink < 0 || uplink >= uplinks_per_tor_)
    throw std::out_of_range("uplink index out of range");
}

inline std::vector<LinkId> ClusterTopology::path_between(int src_gpu, int dst_gpu,
                                                         int uplink_src,
                                                         int uplink_dst) const {
  check_gpu(src_gpu);
  check_gpu(dst_gpu);
  if (src_gpu == dst_gpu) throw std::invalid_argument("path_between: src == dst");
  if (host_of_gpu(src_gpu) == host_of_gpu(dst_gpu)) return {};
  const int src_rack = rack_of_gpu(src_gpu);
  const int dst_rack = rack_of_gpu(dst_gpu);
  LinkId nic_up{LinkKind::kHostNic, src_rack, src_gpu, Direction::kUp};
  LinkId nic_down{LinkKind::kHostNic, dst_rack, dst_gpu, Direction::kDown};
  if (src_rack == dst_rack) return {nic_up, nic_down};
  check_uplink(uplink_src);
  check_uplink(uplink_dst);
  return {nic_up,
          {LinkKind::kTorUplink, src_rack, uplink_src, Direction::kUp},
          {LinkKind::kTorUplink, dst_rack, uplink_dst, Direction::kDown},
          nic_down};
}

inline std::vector<LinkId> ClusterTopology::spray_path(int src_gpu, int dst_gpu) const {
  check_gpu(src_gpu);
  check_gpu(dst_gpu);
  if (src_gpu == dst_gpu) throw std::invalid_argument("spray_path: src == dst");
  if (host_of_gpu(src_gpu) == host_of_gpu(dst_gpu)) return {};
  const int src_rack = rack_of_gpu(src_gpu);
  const int dst_rack = rack_of_gpu(dst_gpu);
  LinkId nic_up{LinkKind::kHostNic, src_rack, src_gpu, Direction::kUp};
  LinkId nic_down{LinkKind::kHostNic, dst_rack, dst_gpu, Direction::kDown};
  if (src_rack == dst_rack) return {nic_up, nic_down};
  return {nic_up,
          {LinkKind::kTorAggregate, src_rack, 0, Direction::kUp},
          {LinkKind::kTorAggregate, dst_rack, 0, Direction::kDown},
          nic_down};
}

// Layout: [NIC links: 2 per GPU][uplinks: 2 per (rack, uplink)][aggregates: 2 per rack]
inline std::size_t ClusterTopology::num_links() const {
  return 2 * static_cast<std::size_t>(total_gpus()) +
         2 * static_cast<std::size_t>(num_racks_) * uplinks_per_tor_ +
         2 * static_cast<std::size_t>(num_racks_);
}

inline std::size_t ClusterTopology::link_index(const LinkId& link) const {
  const std::size_t dir = link.dir == Direction::kUp ? 0 : 1;
  const std::size_t nic_block = 2 * static_cast<std::size_t>(total_gpus());
  const std::size_t uplink_block = 2 * static_cast<std::size_t>(num_racks_) * uplinks_per_tor_;
  switch (link.kind) {
    case LinkKind::kHostNic:
      check_gpu(link.index);
      return 2 * static_cast<std::size_t>(link.index) + dir;
    case LinkKind::kTorUplink:
      check_uplink(link.index);
      return nic_block +
             2 * (static_cast<std::size_t>(link.rack) * uplinks_per_tor_ + link.index) + dir;
    case LinkKind::kTorAggregate:
      return nic_block + uplink_block + 2 * static_cast<std::size_t>(link.rack) + dir;
  }
  throw InvariantViolation("unknown link kind");
}

inline LinkId ClusterTopology::link_at(std::size_t index) const {
  const std::size_t nic_block = 2 * static_cast<std::size_t>(total_gpus());
  const std::size_t uplink_block = 2 * static_cast<std::size_t>(num_racks_) * uplinks_per_tor_;
  const Direction dir = (index % 2 == 0) ? Direction::kUp : Direction::kDown;
  if (index < nic_block) {
    const int gpu = static_cast<int>(index / 2);
    return {LinkKind::kHostNic, rack_of_gpu(gpu), gpu, dir};
  }
  index -= nic_block;
  if (index < uplink_block) {
    const auto slot = static_cast<int>(index / 2);
    return {LinkKind::kTorUplink, slot / uplinks_per_tor_, slot % uplinks_per_tor_, dir};
  }
  index -= uplink_block;
  if (index >= 2 * static_cast<std::size_t>(num_racks_))
    throw std::out_of_range("link index out of range");
  return {LinkKind::kTorAggregate, static_cast<int>(index / 2), 0, dir};
}

inline double ClusterTopology::capacity(const LinkId& link) const {
  switch (link.kind) {
    case LinkKind::kHostNic: return nic_bandwidth_;
    case LinkKind::kTorUplink: return uplink_bandwidth_;
    case LinkKind::kTorAggregate: return uplink_bandwidth_ * uplinks_per_tor_;
  }
  throw InvariantViolation("unknown link kind");
}

}  // namespace defragsim

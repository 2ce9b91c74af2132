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

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <vector>

#include "defragsim/core.hpp"
#include "defragsim/maxmin.hpp"

namespace defragsim {

enum class FlowKind : std::uint8_t { kDp, kPp, kMigration };

struct FlowOwner {
  JobId job = 0;
  FlowKind kind = FlowKind::kDp;
  std::int64_t tag = 0;
};

struct Flow {
  std::uint64_t id = 0;
  std::vector<int> links;  // dense link indices
  double size_bytes = 0;
  double remaining_bytes = 0;
  double rate_bps = 0;
  FlowOwner owner;
};

/// Per-link rate sums stay within capacity and every flow's progress is sane.
inline bool conservation_check(const std::map<std::uint64_t, Flow>& flows,
                               const std::vector<double>& capacities) {
  std::vector<double> load(capacities.size(), 0.0);
  for (const auto& [id, f] : flows) {
    if (!(f.rate_bps >= 0) || f.remaining_bytes < -1e-6 * (1 + f.size_bytes) ||
        f.remaining_bytes > f.size_bytes)
      return false;
    for (int l : f.links) load.at(l) += f.rate_bps;
  }
  for (std::size_t l = 0; l < load.size(); ++l)
    if (load[l] > capacities[l] * (1 + 1e-9)) return false;
  return true;
}

/// Fluid flows sharing capacitated links under max-min fairness. Rates are
/// recomputed lazily, once per batch of flow-set or path changes.
class FlowEngine {
 public:
  explicit FlowEngine(std::vector<double> capacities) : capacities_(std::move(capacities)) {}

  double now() const { return now_; }
  const std::vector<double>& capacities() const { return capacities_; }
  const std::map<std::uint64_t, Flow>& flows() const { return flows_; }
  bool active(std::uint64_t id) const { return flows_.contains(id); }
  const Flow& flow(std::uint64_t id) const { return flows_.at(id); }

  std::uint64_t add_flow(std::vector<int> links, double bytes, FlowOwner owner) {
    if (links.empty()) throw std::invalid_argument("add_flow: empty path");
    if (!(bytes >= 0)) throw std::invalid_argument("add_flow: negative size");
    Flow f;
    f.id = next_id_++;
    f.links = std::move(links);
    f.size_bytes = f.remaining_bytes = bytes;
    f.owner = owner;
    flows_.emplace(f.id, std::move(f));
    dirty_ = true;
    return next_id_ - 1;
  }

  void set_path(std::uint64_t id, std::vector<int> links) {
    if (links.empty()) throw std::invalid_argument("set_path: empty path");
    auto& f = flows_.at(id);
    if (f.links != links) {
      f.links = std::move(links);
      dirty_ = true;
    }
  }

  /// Recomputes rates when stale. Returns true when a recomputation happened.
  bool refresh() {
    if (!dirty_) return false;
    std::vector<std::vector<int>> paths;
    paths.reserve(flows_.size());
    for (const auto& [id, f] : flows_) paths.push_back(f.links);
    const auto rates = maxmin_rates(paths, capacities_);
    std::size_t i = 0;
    for (auto& [id, f] : flows_) f.rate_bps = rates[i++];
    dirty_ = false;
    ++recomputations_;
    return true;
  }

  long recomputations() const { return recomputations_; }

  /// Earliest completion under current rates; +inf when idle.
  double next_completion() const {
    check_invariant(!dirty_, "next_completion on stale rates");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [id, f] : flows_) {
      if (f.remaining_bytes <= 0) return now_;
      if (f.rate_bps > 0) best = std::min(best, now_ + f.remaining_bytes * kBitsPerByte / f.rate_bps);
    }
    return best;
  }

  void advance_to(double t) {
    if (t < now_) throw InvariantViolation("flow engine: time moved backwards");
    check_invariant(!dirty_ || t == now_, "advance_to on stale rates");
    const double dt = t - now_;
    if (dt > 0)
      for (auto& [id, f] : flows_) f.remaining_bytes -= f.rate_bps * dt / kBitsPerByte;
    now_ = t;
  }

  /// Removes and returns the flows that have finished by now().
  std::vector<Flow> take_completed() {
    std::vector<Flow> done;
    for (auto it = flows_.begin(); it != flows_.end();) {
      const Flow& f = it->second;
      const bool finished =
          f.remaining_bytes <= 1e-9 * f.size_bytes ||
          (f.rate_bps > 0 && f.remaining_bytes * kBitsPerByte / f.rate_bps <= 1e-12 * (1 + now_));
      if (finished) {
        done.push_back(it->second);
        done.back().remaining_bytes = 0;
        it = flows_.erase(it);
      } else {
        ++it;
      }
    }
    if (!done.empty()) dirty_ = true;
    return done;
  }

  /// take_completed(), falling back to the single flow closest to finishing
  /// when rounding left every remainder a hair above tolerance.
  std::vector<Flow> take_due() {
    auto done = take_completed();
    if (!done.empty() || flows_.empty()) return done;
    auto best = flows_.end();
    double best_time = std::numeric_limits<double>::infinity();
    for (auto it = flows_.begin(); it != flows_.end(); ++it) {
      const Flow& f = it->second;
      if (f.rate_bps <= 0) continue;
      const double t = f.remaining_bytes * kBitsPerByte / f.rate_bps;
      if (t < best_time) {
        best_time = t;
        best = it;
      }
    }
    check_invariant(best != flows_.end() && best_time <= 1e-6 * (1 + now_),
                    "flow engine: no flow due at its completion time");
    done.push_back(best->second);
    done.back().remaining_bytes = 0;
    flows_.erase(best);
    dirty_ = true;
    return done;
  }

  bool conservation_ok() const { return conservation_check(flows_, capacities_); }

  /// Test hook: overrides a flow's rate without recomputation.
  void inject_rate(std::uint64_t id, double rate) { flows_.at(id).rate_bps = rate; }

 private:
  std::vector<double> capacities_;
  std::map<std::uint64_t, Flow> flows_;
  std::uint64_t next_id_ = 1;
  double now_ = 0;
  bool dirty_ = false;
  long recomputations_ = 0;
};

/// Event kinds in tie-break order at equal timestamps. Flow completions come
/// from the engine and always go first.
enum class EventKind : int {
  kFlowDone = 0,
  kComputeDone = 1,
  kLocalCommDone = 2,
  kMigrationResume = 3,
  kJobArrival = 4,
  kRebalance = 5,
};

struct Event {
  double time = 0;
  EventKind kind = EventKind::kJobArrival;
  std::uint64_t seq = 0;
  JobId job = 0;
  std::int64_t aux = 0;
};

class EventQueue {
 public:
  void push(double time, EventKind kind, JobId job, std::int64_t aux = 0) {
    if (!(time >= clock_)) throw InvariantViolation("event scheduled in the past");
    heap_.push({time, kind, seq_++, job, aux});
  }
  bool empty() const { return heap_.empty(); }
  const Event& top() const { return heap_.top(); }
  Event pop() {
    Event e = heap_.top();
    heap_.pop();
    clock_ = e.time;
    return e;
  }
  double next_time() const {
    return heap_.empty() ? std::numeric_limits<double>::infinity() : heap_.top().time;
  }
  /// Lower bound for future pushes.
  void set_clock(double t) { clock_ = std::max(clock_, t); }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.kind != b.kind) return a.kind > b.kind;
      return a.seq > b.seq;
    }
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t seq_ = 0;
  double clock_ = 0;
};

}  // namespace defragsim

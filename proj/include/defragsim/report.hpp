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
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "defragsim/simulation.hpp"

namespace defragsim {

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value.
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of empty sample");
  if (!(p > 0) || p > 100) throw std::invalid_argument("percentile rank must be in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * values.size()));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

struct SlowdownSummary {
  std::size_t jobs = 0;
  double mean = 0;
  double p50 = 0;
  double p90 = 0;
  double p99 = 0;
  double max = 0;
};

inline SlowdownSummary summarize_slowdowns(const std::vector<double>& slowdowns) {
  SlowdownSummary s;
  s.jobs = slowdowns.size();
  if (slowdowns.empty()) return s;
  double sum = 0;
  for (double v : slowdowns) sum += v;
  s.mean = sum / slowdowns.size();
  s.p50 = percentile(slowdowns, 50);
  s.p90 = percentile(slowdowns, 90);
  s.p99 = percentile(slowdowns, 99);
  s.max = *std::max_element(slowdowns.begin(), slowdowns.end());
  return s;
}

inline std::vector<double> slowdowns_of(const RunResult& run) {
  std::vector<double> out;
  out.reserve(run.jobs.size());
  for (const auto& j : run.jobs) out.push_back(j.slowdown);
  return out;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline nlohmann::json run_summary(const RunResult& run) {
  const auto s = summarize_slowdowns(slowdowns_of(run));
  int moves = 0, small = 0;
  for (const auto& r : run.solves) {
    moves += r.move_count;
    small += r.move_count <= 2;
  }
  double max_downtime_fraction = 0;
  for (const auto& j : run.jobs)
    if (j.ideal > 0) max_downtime_fraction = std::max(max_downtime_fraction, j.downtime / j.ideal);
  double min_migration = 0;
  if (!run.migrations.empty()) {
    min_migration = run.migrations.front().duration();
    for (const auto& m : run.migrations) min_migration = std::min(min_migration, m.duration());
  }
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(run.event_hash));
  return {{"jobs", s.jobs},
          {"mean_slowdown", s.mean},
          {"p50_slowdown", s.p50},
          {"p90_slowdown", s.p90},
          {"p99_slowdown", s.p99},
          {"max_slowdown", s.max},
          {"defrag_events", run.solves.size()},
          {"total_moves", moves},
          {"mean_moves", run.solves.empty() ? 0.0 : static_cast<double>(moves) / run.solves.size()},
          {"share_le2_moves", run.solves.empty() ? 0.0 : static_cast<double>(small) / run.solves.size()},
          {"job_migrations", run.migrations.size()},
          {"min_migration_seconds", min_migration},
          {"max_downtime_fraction", max_downtime_fraction},
          {"isolation_checks", run.isolation_checks},
          {"isolation_violations", run.isolation_violations},
          {"conservation_checks", run.conservation_checks},
          {"conservation_failures", run.conservation_failures},
          {"diagnostics", run.diagnostics},
          {"events", run.events},
          {"event_hash", hash},
          {"makespan", run.makespan}};
}

inline const char* kJobsHeader =
    "job,model,gpus,hosts,tp,pp,arrival,start,end,ideal,slowdown,host_moves,migrations,downtime";

inline void write_jobs_csv(std::ostream& out, const RunResult& run) {
  out << kJobsHeader << '\n';
  for (const auto& j : run.jobs)
    out << j.id << ',' << j.model << ',' << j.gpus << ',' << j.hosts << ',' << j.tp << ',' << j.pp
        << ',' << format_double(j.arrival) << ',' << format_double(j.start) << ','
        << format_double(j.end) << ',' << format_double(j.ideal) << ','
        << format_double(j.slowdown) << ',' << j.host_moves << ',' << j.migrations << ','
        << format_double(j.downtime) << '\n';
}

inline const char* kSeriesHeader =
    "time,max_degree,mean_degree,racks_over,fragmented_groups,running,queued,uplink_utilization";

inline void write_series_csv(std::ostream& out, const RunResult& run) {
  out << kSeriesHeader << '\n';
  for (const auto& r : run.series)
    out << format_double(r.time) << ',' << r.max_degree << ',' << format_double(r.mean_degree)
        << ',' << r.racks_over << ',' << r.fragmented_groups << ',' << r.running << ','
        << r.queued << ',' << format_double(r.uplink_utilization) << '\n';
}

inline const char* kSolverHeader = "time,trigger,move_count,nodes,optimal,status,movable_units,widened";

/// Deterministic solver log; wall-clock times go to write_solver_timing_csv.
inline void write_solver_csv(std::ostream& out, const RunResult& run) {
  out << kSolverHeader << '\n';
  for (const auto& s : run.solves)
    out << format_double(s.time) << ',' << s.trigger << ',' << s.move_count << ',' << s.nodes
        << ',' << (s.optimal ? 1 : 0) << ',' << s.status << ',' << s.movable_units << ','
        << (s.widened ? 1 : 0) << '\n';
}

inline const char* kSolverTimingHeader = "time,move_count,solve_seconds";

inline void write_solver_timing_csv(std::ostream& out, const RunResult& run) {
  out << kSolverTimingHeader << '\n';
  for (const auto& s : run.solves)
    out << format_double(s.time) << ',' << s.move_count << ',' << format_double(s.solve_seconds)
        << '\n';
}

inline const char* kMigrationsHeader =
    "job,plan_time,pause_time,resume_time,duration,downtime,host_moves,bytes";

inline void write_migrations_csv(std::ostream& out, const RunResult& run) {
  out << kMigrationsHeader << '\n';
  for (const auto& m : run.migrations)
    out << m.job << ',' << format_double(m.plan_time) << ',' << format_double(m.pause_time) << ','
        << format_double(m.resume_time) << ',' << format_double(m.duration()) << ','
        << format_double(m.downtime()) << ',' << m.host_moves << ',' << format_double(m.bytes)
        << '\n';
}

/// Median solve time per move count, keeping buckets with at least
/// `min_samples` solves.
inline std::map<int, double> median_solve_seconds(const std::vector<SolveRecord>& solves,
                                                  std::size_t min_samples) {
  std::map<int, std::vector<double>> buckets;
  for (const auto& s : solves) buckets[s.move_count].push_back(s.solve_seconds);
  std::map<int, double> out;
  for (auto& [moves, times] : buckets)
    if (times.size() >= min_samples) out[moves] = percentile(times, 50);
  return out;
}

}  // namespace defragsim

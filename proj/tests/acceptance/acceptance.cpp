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

// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Desk-scale experiments read their configs from configs/.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "../coloring_oracle.hpp"
#include "../generators.hpp"
#include "../maxmin_oracle.hpp"
#include "defragsim/experiment.hpp"

namespace ds = defragsim;
namespace dt = defragsim::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ds::ExperimentConfig config(const std::string& name) {
  auto c = ds::load_config(std::filesystem::path(DEFRAGSIM_CONFIG_DIR) / name);
  c.workers = 1;
  return c;
}

ds::SolverInstance instance_of(int racks, int capacity, int lambda,
                               const std::vector<std::vector<int>>& columns) {
  ds::SolverInstance in;
  in.racks = racks;
  in.rack_capacity = capacity;
  in.threshold = lambda;
  in.reserved.assign(racks, 0);
  in.fixed_degree.assign(racks, 0);
  for (std::size_t j = 0; j < columns.size(); ++j) {
    ds::SolverJob job;
    job.id = static_cast<ds::JobId>(j);
    job.initial = columns[j];
    job.size = std::accumulate(columns[j].begin(), columns[j].end(), 0);
    in.jobs.push_back(job);
  }
  return in;
}

// Solver and exhaustive search agree on feasibility and on the optimum.
bool agrees(const ds::SolverInstance& in, long max_states = 50'000'000) {
  const auto exact = ds::brute_force_min_moves(in, max_states);
  const auto plan = ds::solve(in);
  if (!exact) return plan.status == ds::SolveStatus::kInfeasible;
  return plan.status == ds::SolveStatus::kOptimal && plan.move_count == *exact &&
         ds::satisfies_constraints(in, plan.target) && ds::migration_distance(in, plan.target) == *exact;
}

// Every multiset of at most `max_jobs` job columns on `racks` racks of
// `capacity` hosts, up to relabeling racks.
void for_each_placement(int racks, int capacity, int max_jobs,
                        const std::function<void(const std::vector<std::vector<int>>&)>& visit) {
  std::vector<std::vector<int>> columns;
  std::vector<int> c(racks, 0);
  std::function<void(int)> gen = [&](int t) {
    if (t == racks) {
      if (std::any_of(c.begin(), c.end(), [](int v) { return v > 0; })) columns.push_back(c);
      return;
    }
    for (int v = 0; v <= capacity; ++v) {
      c[t] = v;
      gen(t + 1);
    }
  };
  gen(0);

  std::vector<std::vector<int>> chosen;
  std::vector<int> load(racks, 0);
  auto relabeled = [&](const std::vector<int>& perm) {
    std::vector<std::vector<int>> m;
    for (const auto& col : chosen) {
      std::vector<int> d(racks);
      for (int t = 0; t < racks; ++t) d[t] = col[perm[t]];
      m.push_back(std::move(d));
    }
    std::sort(m.begin(), m.end());
    return m;
  };
  auto canonical = [&] {
    std::vector<int> perm(racks);
    std::iota(perm.begin(), perm.end(), 0);
    const auto base = relabeled(perm);
    while (std::next_permutation(perm.begin(), perm.end()))
      if (relabeled(perm) < base) return false;
    return true;
  };
  std::function<void(std::size_t, int)> rec = [&](std::size_t from, int left) {
    if (!chosen.empty() && canonical()) visit(chosen);
    if (left == 0) return;
    for (std::size_t i = from; i < columns.size(); ++i) {
      bool fits = true;
      for (int t = 0; t < racks; ++t) fits = fits && load[t] + columns[i][t] <= capacity;
      if (!fits) continue;
      for (int t = 0; t < racks; ++t) load[t] += columns[i][t];
      chosen.push_back(columns[i]);
      rec(i, left - 1);
      chosen.pop_back();
      for (int t = 0; t < racks; ++t) load[t] -= columns[i][t];
    }
  };
  rec(0, max_jobs);
}

// ---------------------------------------------------------------------------

Outcome theorem_one() {
  dt::Rng rng(2025);
  int worst_dp = 0, bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto shape = dt::random_shape(rng);
    const auto topo = dt::make_topology(shape);
    const auto jobs = dt::random_jobs(rng, topo.total_hosts(), shape.hosts_per_rack, {1});
    const int d = ds::fragmentation_degree(ds::sequential_placement(jobs, topo)).max_degree;
    worst_dp = std::max(worst_dp, d);
    bad += d > 2;
  }
  double worst_ratio = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto shape = dt::random_shape(rng);
    const auto topo = dt::make_topology(shape);
    const auto jobs = dt::random_jobs(rng, topo.total_hosts(), shape.hosts_per_rack, {1, 2, 4, 8});
    int dc = 1;
    for (const auto& j : jobs) dc = std::max(dc, j.rings);
    const int d = ds::fragmentation_degree(ds::sequential_placement(jobs, topo)).max_degree;
    worst_ratio = std::max(worst_ratio, static_cast<double>(d) / dc);
    bad += d > 2 * dc;
  }
  return {bad == 0, fmt("2000 instances, max degree %d pure DP, max degree/D_C %.2f with rings, %d over bound",
                        worst_dp, worst_ratio, bad)};
}

Outcome solver_optimality() {
  long instances = 0, violating = 0, disagreements = 0;
  for (int racks = 1; racks <= 4; ++racks)
    for (int cap = 1; cap <= 4; ++cap)
      for_each_placement(racks, cap, 5, [&](const std::vector<std::vector<int>>& columns) {
        for (int lambda : {2, 3}) {
          const auto in = instance_of(racks, cap, lambda, columns);
          ++instances;
          violating += !ds::satisfies_constraints(in, [&] {
            ds::RackMatrix w;
            for (const auto& j : in.jobs) w.push_back(j.initial);
            return w;
          }());
          disagreements += !agrees(in);
        }
      });
  dt::Rng rng(500);
  int random = 0, redraws = 0;
  while (random < 500) {
    const auto in = dt::random_instance(rng, dt::uniform(rng, 2, 6), dt::uniform(rng, 2, 5),
                                        dt::uniform(rng, 2, 7), dt::uniform(rng, 2, 3));
    try {
      disagreements += !agrees(in, 20'000'000);
      ++random;
    } catch (const std::length_error&) {
      ++redraws;
    }
  }
  return {disagreements == 0,
          fmt("%ld grid instances (%ld violating) + %d random (%d oversized redrawn), %ld disagreements",
              instances, violating, random, redraws, disagreements)};
}

Outcome edge_coloring() {
  dt::Rng rng(3);
  int bad = 0, max_delta = 0;
  for (int i = 0; i < 1000; ++i) {
    const int l = dt::uniform(rng, 1, 24), r = dt::uniform(rng, 1, 24);
    const auto edges = dt::random_multigraph(rng, l, r, dt::uniform(rng, 1, 16));
    const int delta = dt::max_degree(edges, l, r);
    max_delta = std::max(max_delta, delta);
    const auto c = ds::color_bipartite(l, r, edges);
    const int used = edges.empty() ? 0 : *std::max_element(c.colors.begin(), c.colors.end()) + 1;
    bad += !(dt::proper(edges, c.colors, delta) && c.num_colors == delta && used == delta);
  }
  return {bad == 0, fmt("1000 multigraphs, max delta %d, %d improper or not delta colors", max_delta, bad)};
}

Outcome path_isolation() {
  long checks = 0, violations = 0;
  int runs = 0;
  auto sweep = [&](ds::ExperimentConfig c, const std::vector<int>& lambdas) {
    c.algorithms = {"monkeytree"};
    c.simulation.check_isolation = true;
    for (int lambda : lambdas) {
      c.threshold = lambda;
      for (const auto& run : ds::run_experiment(c, std::nullopt).runs) {
        checks += run.isolation_checks;
        violations += run.isolation_violations;
        ++runs;
      }
    }
  };
  auto fig5 = config("fig5_ordering.json");
  sweep(fig5, {2});
  auto wide = config("lambda_sweep.json");
  wide.trace.num_jobs = 400;
  sweep(wide, {2, 3, 4});
  auto tp = config("smoke.json");
  tp.trace.loads = {0.9, 1.0};
  tp.trace.num_jobs = 200;
  tp.trace.seeds = 2;
  sweep(tp, {4});
  return {violations == 0 && checks > 0,
          fmt("%d runs, %ld quiescent checks, %ld with a shared uplink", runs, checks, violations)};
}

Outcome maxmin_and_conservation() {
  dt::Rng rng(5);
  double worst = 0;
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto g = dt::random_flow_graph(rng);
    const auto engine = ds::maxmin_rates(g.paths, g.capacities);
    const auto oracle = dt::water_fill(g.paths, g.capacities);
    for (std::size_t f = 0; f < engine.size(); ++f) {
      const double err = oracle[f] == 0 ? std::abs(engine[f]) : std::abs(engine[f] - oracle[f]) / oracle[f];
      worst = std::max(worst, err);
      bad += err > 1e-9;
    }
  }
  auto c = config("fig5_ordering.json");
  c.trace.loads = {0.9};
  c.trace.seeds = 1;
  c.simulation.check_conservation = true;
  long checks = 0, failures = 0, refreshes = 0;
  for (const auto& run : ds::run_experiment(c, std::nullopt).runs) {
    checks += run.conservation_checks;
    failures += run.conservation_failures;
    refreshes += run.rate_recomputations;
  }
  return {bad == 0 && failures == 0 && checks > 0 && checks == refreshes,
          fmt("1000 graphs, worst relative error %.2e; 90%% trace: %ld checks over %ld rate updates, %ld failures",
              worst, checks, refreshes, failures)};
}

Outcome determinism() {
  auto c = config("fig5_ordering.json");
  c.trace.loads = {0.9};
  c.trace.seeds = 2;
  c.simulation.keep_event_log = true;
  const auto a = ds::run_experiment(c, std::nullopt);
  const auto b = ds::run_experiment(c, std::nullopt);
  int same = 0, logs = 0;
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    same += a.runs[i].event_hash == b.runs[i].event_hash;
    logs += a.runs[i].event_log == b.runs[i].event_log;
  }
  const bool seeds_differ = a.runs.front().event_hash != a.runs.back().event_hash;
  return {same == static_cast<int>(a.runs.size()) && logs == same && seeds_differ,
          fmt("%d/%zu runs with identical hash and event log, distinct traces hash differently: %s", same,
              a.runs.size(), seeds_differ ? "yes" : "no")};
}

Outcome figure_five() {
  const auto c = config("fig5_ordering.json");
  const auto r = ds::run_experiment(c, std::nullopt);
  std::map<std::pair<double, std::string>, std::pair<double, double>> stats;
  for (const auto& a : r.summary.at("aggregate"))
    stats[{a.at("load").get<double>(), a.at("algorithm").get<std::string>()}] = {
        a.at("mean_slowdown").get<double>(), a.at("p99_slowdown").get<double>()};
  bool pass = true;
  std::ostringstream out;
  for (double load : c.trace.loads) {
    auto get = [&](const char* alg) { return stats.at({load, alg}); };
    const auto mt = get("monkeytree"), po = get("perfect-only"), sg = get("sglb"), cx = get("crux"),
               ec = get("ecmp");
    std::vector<std::string> broken;
    auto chain = [&](const char* metric, double m, double p, double s, double x, double e) {
      if (!(m <= p)) broken.push_back(std::string(metric) + " monkeytree>perfect-only");
      if (!(p <= s)) broken.push_back(std::string(metric) + " perfect-only>sglb");
      if (!(p <= x)) broken.push_back(std::string(metric) + " perfect-only>crux");
      if (!(p <= e)) broken.push_back(std::string(metric) + " perfect-only>ecmp");
      if (!(s <= x)) broken.push_back(std::string(metric) + " sglb>crux");
      if (!(x <= e)) broken.push_back(std::string(metric) + " crux>ecmp");
    };
    chain("mean", mt.first, po.first, sg.first, cx.first, ec.first);
    chain("p99", mt.second, po.second, sg.second, cx.second, ec.second);
    if (!(mt.second <= 1.10)) broken.push_back("monkeytree p99>1.10");
    pass = pass && broken.empty();
    out << fmt("load %.1f mean mt %.4f po %.4f sglb %.4f crux %.4f ecmp %.4f; p99 mt %.4f po %.4f sglb %.4f "
               "crux %.4f ecmp %.4f",
               load, mt.first, po.first, sg.first, cx.first, ec.first, mt.second, po.second, sg.second,
               cx.second, ec.second);
    if (!broken.empty()) {
      out << " [";
      for (std::size_t i = 0; i < broken.size(); ++i) out << (i ? ", " : "") << broken[i];
      out << "]";
    }
    out << "; ";
  }
  return {pass, out.str()};
}

struct MoveStats {
  ds::RunResult run;
  std::vector<int> moves;
};

MoveStats& move_run() {
  static MoveStats stats = [] {
    MoveStats s;
    s.run = ds::run_experiment(config("move_distribution.json"), std::nullopt).runs.at(0);
    for (const auto& r : s.run.solves) s.moves.push_back(r.move_count);
    return s;
  }();
  return stats;
}

Outcome move_distribution() {
  const auto& m = move_run().moves;
  if (m.empty()) return {false, "no defragmentation events"};
  const double mean = std::accumulate(m.begin(), m.end(), 0.0) / m.size();
  const double share = static_cast<double>(std::count_if(m.begin(), m.end(), [](int v) { return v <= 2; })) / m.size();
  std::map<int, int> hist;
  for (int v : m) ++hist[v];
  std::ostringstream h;
  for (const auto& [k, n] : hist) h << " " << k << ":" << n;
  return {share >= 0.70 && mean >= 1.4 && mean <= 2.2,
          fmt("%zu events, %.1f%% need <= 2 moves, mean %.3f, histogram%s", m.size(), 100 * share, mean,
              h.str().c_str())};
}

Outcome solver_runtime_trend() {
  const auto medians = ds::median_solve_seconds(move_run().run.solves, 3);
  if (medians.size() < 2) return {false, "fewer than two move counts with 3 or more solves"};
  bool pass = true;
  double prev = 0;
  std::ostringstream out;
  for (const auto& [k, med] : medians) {
    pass = pass && med >= prev;
    prev = med;
    out << fmt(" %d moves %.3f ms;", k, 1e3 * med);
  }
  return {pass, "median solve time by move count:" + out.str()};
}

Outcome lambda_sweep() {
  const auto base = config("lambda_sweep.json");
  std::vector<long> migrations;
  std::vector<double> mean;
  std::ostringstream out;
  for (const auto& cell : ds::sweep_cells(base, ds::SweepAxis::kLambda)) {
    const auto r = ds::run_experiment(cell.config, std::nullopt);
    long mig = 0;
    std::vector<double> sd;
    for (const auto& run : r.runs) {
      mig += static_cast<long>(run.migrations.size());
      const auto v = ds::slowdowns_of(run);
      sd.insert(sd.end(), v.begin(), v.end());
    }
    migrations.push_back(mig);
    mean.push_back(ds::summarize_slowdowns(sd).mean);
    out << fmt(" lambda %d: %ld migrations, mean slowdown %.5f;", cell.config.threshold, mig, mean.back());
  }
  bool pass = base.sweep.thresholds.front() == 2 && base.sweep.thresholds.back() == base.topology.uplinks_per_tor;
  for (std::size_t i = 1; i < migrations.size(); ++i) pass = pass && migrations[i] <= migrations[i - 1];
  const double rel = std::abs(mean.back() - mean.front()) / mean.front();
  pass = pass && rel <= 0.01;
  return {pass, out.str() + fmt(" lambda=uplinks vs lambda=2 differ by %.3f%%", 100 * rel)};
}

Outcome spray_full_bisection() {
  const auto c = config("spray_full_bisection.json");
  const auto topo = c.topology.build();
  if (!topo.full_bisection()) return {false, "config is not full bisection"};
  double worst = 0;
  std::size_t jobs = 0;
  for (const auto& run : ds::run_experiment(c, std::nullopt).runs)
    for (const auto& j : run.jobs) {
      worst = std::max(worst, std::abs(j.slowdown - 1.0));
      ++jobs;
    }
  return {jobs > 0 && worst <= 1e-3, fmt("%zu jobs, max |slowdown - 1| = %.2e", jobs, worst)};
}

Outcome migration_overhead() {
  const auto c = config("migration_overhead.json");
  std::size_t migrations = 0, moved_jobs = 0;
  double min_duration = std::numeric_limits<double>::infinity(), worst_fraction = 0;
  for (const auto& run : ds::run_experiment(c, std::nullopt).runs) {
    for (const auto& m : run.migrations) {
      ++migrations;
      min_duration = std::min(min_duration, m.duration());
    }
    for (const auto& j : run.jobs)
      if (j.migrations > 0) {
        ++moved_jobs;
        worst_fraction = std::max(worst_fraction, j.downtime / j.ideal);
      }
  }
  const double reinit = c.simulation.reinit_seconds;
  return {migrations > 0 && min_duration >= reinit && worst_fraction < 0.01,
          fmt("%zu migrations over %zu jobs, shortest %.3f s (reinit %.0f s), worst downtime %.3f%% of ideal",
              migrations, moved_jobs, min_duration, reinit, 100 * worst_fraction)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"sequential placement fragmentation bound", theorem_one},
      {"solver optimality against exhaustive search", solver_optimality},
      {"bipartite edge coloring uses exactly delta colors", edge_coloring},
      {"path isolation at quiescent points", path_isolation},
      {"max-min oracle and conservation", maxmin_and_conservation},
      {"deterministic event hash", determinism},
      {"slowdown ordering at high load", figure_five},
      {"move-count distribution", move_distribution},
      {"solve time non-decreasing in move count", solver_runtime_trend},
      {"threshold sweep", lambda_sweep},
      {"spraying at full bisection", spray_full_bisection},
      {"migration overhead", migration_overhead},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2zu %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, secs,
                o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}

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

#include <gtest/gtest.h>

#include "defragsim/simulation.hpp"

namespace defragsim {
namespace {

ModelTemplate plain(double params, double compute) {
  return {"plain", params, true, false, true, true, compute, 1 * kGB};
}

ControllerConfig with(const char* algorithm, int threshold = 0) {
  ControllerConfig c;
  c.algorithm = algorithm_from_name(algorithm);
  c.threshold = threshold;
  return c;
}

const JobRecord& record(const RunResult& r, JobId id) {
  for (const auto& j : r.jobs)
    if (j.id == id) return j;
  throw std::out_of_range("no such job");
}

TEST(JobModel, SingleRackJobRunsAtIdeal) {
  const auto t = ClusterTopology::make_two_tier(2, 4, 8, 2, 400 * kGbps, 400 * kGbps, 2);
  const auto job = make_job(plain(8 * kGB, 2.0), 1, 32, 32, 1, 1, false, 20, 3.0);
  const auto r = simulate(t, with("monkeytree"), {}, {job});
  ASSERT_EQ(r.jobs.size(), 1u);
  EXPECT_NEAR(r.jobs[0].slowdown, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.jobs[0].start, 3.0);
}

TEST(JobModel, CrossRackRingMatchesClosedForm) {
  // Three one-host racks: a 3-host DP job spans all of them.
  const auto t = ClusterTopology::make_two_tier(3, 1, 8, 1, 400 * kGbps, 400 * kGbps, 1);
  const double params = 12 * kGB, compute = 1.5;
  const int iters = 7;
  const auto job = make_job(plain(params, compute), 1, 24, 24, 1, 1, false, iters, 0);
  const auto r = simulate(t, with("perfect-only"), {}, {job});
  const double line = 400e9 / 8;
  const double per_iter = compute + 2 * params * 23 / 24 / line;
  EXPECT_NEAR(r.jobs[0].end - r.jobs[0].start, iters * per_iter, 1e-9 * iters * per_iter);
  EXPECT_NEAR(r.jobs[0].slowdown, 1.0, 1e-12);
}

TEST(JobModel, AloneIsIdealForEveryParallelism) {
  const auto t = ClusterTopology::make_two_tier(4, 2, 8, 8, 400 * kGbps, 400 * kGbps, 8);
  const ModelTemplate m = plain(16 * kGB, 4.0);
  const std::vector<JobSpec> jobs = {
      make_job(m, 1, 48, 48, 1, 1, false, 5, 0), make_job(m, 2, 64, 8, 8, 1, false, 5, 0),
      make_job(m, 3, 64, 4, 8, 2, false, 5, 0), make_job(m, 4, 64, 16, 1, 4, true, 5, 0),
      make_job(m, 5, 4, 4, 1, 1, false, 5, 0)};
  for (const auto& j : jobs)
    for (const char* alg : {"monkeytree", "perfect-only", "monkeytree-crux"}) {
      const auto r = simulate(t, with(alg), {}, {j});
      EXPECT_NEAR(r.jobs[0].slowdown, 1.0, 1e-12) << "job " << j.id << " " << alg;
    }
}

TEST(JobModel, SimultaneousRingCompletionsAcrossJobs) {
  // Two identical 3-host jobs on 2-host racks share rack 1. Slow uplinks make
  // their ring flows the last step of the iteration, ending at one instant; the
  // first departure reroutes the second job.
  const auto t = ClusterTopology::make_two_tier(3, 2, 1, 2, 400 * kGbps, 200 * kGbps, 2);
  const ModelTemplate m = plain(4 * kGB, 1.0);
  const std::vector<JobSpec> jobs = {make_job(m, 1, 3, 3, 1, 1, false, 1, 0),
                                     make_job(m, 2, 3, 3, 1, 1, false, 1, 0)};
  for (const char* alg : {"crux", "perfect-only", "monkeytree", "ecmp"}) {
    const auto r = simulate(t, with(alg, 4), {}, jobs);
    ASSERT_EQ(r.jobs.size(), 2u) << alg;
    EXPECT_DOUBLE_EQ(record(r, 1).end, record(r, 2).end) << alg;
  }
}

TEST(JobModel, HashedRingsOfOneJobCanCollide) {
  // Eight TP rings leave each rack; a hash need not spread them over eight uplinks.
  const auto t = ClusterTopology::make_two_tier(4, 2, 8, 8, 400 * kGbps, 400 * kGbps, 8);
  const auto j = make_job(plain(16 * kGB, 4.0), 2, 64, 8, 8, 1, false, 5, 0);
  const auto ecmp = simulate(t, with("ecmp"), {}, {j});
  EXPECT_GT(ecmp.jobs[0].slowdown, 1.0);
  const auto single = make_job(plain(16 * kGB, 4.0), 1, 48, 48, 1, 1, false, 5, 0);
  EXPECT_NEAR(simulate(t, with("ecmp"), {}, {single}).jobs[0].slowdown, 1.0, 1e-12);
}

TEST(JobModel, EmptyTrace) {
  const auto t = ClusterTopology::make_two_tier(2, 2, 8, 2, 1, 1, 2);
  const auto r = simulate(t, with("monkeytree"), {}, {});
  EXPECT_TRUE(r.jobs.empty());
  EXPECT_EQ(r.events, 0);
}

// Two racks of three single-GPU hosts, lambda = 1. A and B fill racks 0 and
// 1, C straddles them. Once A and B leave, D takes hosts 0, 1, 3 and breaks
// the threshold; one move of C onto free host 4 repairs it.
struct ChainScenario {
  ClusterTopology topo = ClusterTopology::make_two_tier(2, 3, 1, 2, 90 * kGbps, 90 * kGbps, 2);
  std::vector<JobSpec> jobs;
  ChainScenario() {
    const ModelTemplate m = plain(4 * kGB, 10.0);
    jobs = {make_job(m, 0, 2, 2, 1, 1, false, 1, 0.0), make_job(m, 1, 2, 2, 1, 1, false, 1, 0.1),
            make_job(m, 2, 2, 2, 1, 1, false, 100, 0.2), make_job(m, 3, 3, 3, 1, 1, false, 5, 50.0)};
  }
};

TEST(Migration, TwelveGigabytesAtNinetyGbps) {
  ChainScenario s;
  SimConfig cfg;  // optimizer multiplier 3: 4 GB of weights become a 12 GB shard
  const auto r = simulate(s.topo, with("monkeytree", 1), cfg, s.jobs);
  ASSERT_EQ(r.solves.size(), 1u);
  EXPECT_EQ(r.solves[0].move_count, 1);
  ASSERT_EQ(r.migrations.size(), 1u);
  const auto& m = r.migrations[0];
  EXPECT_EQ(m.job, 2);
  const double transfer = 12e9 * 8 / 90e9;
  EXPECT_NEAR(transfer, 1.07, 0.005);
  EXPECT_NEAR(m.downtime(), transfer + 10.0, 1e-6);
  EXPECT_GE(m.duration(), 10.0);
  EXPECT_GE(m.pause_time, m.plan_time);
  EXPECT_EQ(r.isolation_violations, 0);
  EXPECT_EQ(r.conservation_failures, 0);
}

TEST(Migration, DependentMoveWaitsForSource) {
  // Found by a seeded search: one plan moves job 1 onto a host job 3 vacates.
  const auto t = ClusterTopology::make_two_tier(4, 2, 1, 2, 90 * kGbps, 90 * kGbps, 2);
  const ModelTemplate m = plain(4 * kGB, 10.0);
  const std::vector<JobSpec> jobs = {
      make_job(m, 0, 2, 2, 1, 1, false, 3, 5), make_job(m, 1, 1, 1, 1, 1, false, 5, 7),
      make_job(m, 2, 1, 1, 1, 1, false, 8, 9), make_job(m, 3, 3, 3, 1, 1, false, 4, 18),
      make_job(m, 4, 3, 3, 1, 1, false, 1, 20)};
  const auto r = simulate(t, with("monkeytree", 1), {}, jobs);
  ASSERT_EQ(r.migrations.size(), 2u);
  const auto& first = r.migrations[0].job == 1 ? r.migrations[0] : r.migrations[1];
  const auto& second = r.migrations[0].job == 1 ? r.migrations[1] : r.migrations[0];
  ASSERT_EQ(first.job, 1);
  ASSERT_EQ(second.job, 3);
  const double transfer = 12e9 * 8 / 90e9;
  EXPECT_LT(first.pause_time, second.pause_time);
  EXPECT_GT(first.downtime(), transfer + 10.0 + 1.0);
  EXPECT_GE(first.resume_time, second.pause_time + transfer + 10.0 - 1e-9);
  EXPECT_GE(first.duration(), 10.0);
  EXPECT_EQ(r.isolation_violations, 0);
}

TEST(Migration, MigratingJobLosesExactlyItsDowntime) {
  ChainScenario s;
  const auto r = simulate(s.topo, with("monkeytree", 1), {}, s.jobs);
  const auto& c = record(r, 2);
  EXPECT_EQ(c.migrations, 1);
  EXPECT_EQ(c.host_moves, 1);
  EXPECT_NEAR(c.end - c.start, c.ideal + c.downtime, 1e-6);
  EXPECT_DOUBLE_EQ(c.downtime, r.migrations[0].downtime());
}

TEST(Migration, ZeroByteShardIsReinitOnly) {
  ChainScenario s;
  SimConfig cfg;
  cfg.optimizer_multiplier = 0;
  const auto r = simulate(s.topo, with("monkeytree", 1), cfg, s.jobs);
  ASSERT_EQ(r.migrations.size(), 1u);
  EXPECT_NEAR(r.migrations[0].downtime(), 10.0, 1e-9);
}

TEST(Migration, WithoutMigrationTheViolationStays) {
  ChainScenario s;
  const auto r = simulate(s.topo, with("perfect-only", 1), {}, s.jobs);
  EXPECT_TRUE(r.migrations.empty());
  EXPECT_TRUE(r.solves.empty());
}

TEST(Determinism, SameInputSameHash) {
  const auto t = ClusterTopology::make_two_tier(4, 4, 8, 4, 400 * kGbps, 400 * kGbps, 4);
  WorkloadMenu menu;
  menu.job_gpus = {8, 16, 32, 64};
  menu.tp_degrees = {2};
  menu.iterations = {20, 40};
  for (auto& m : menu.models) m.replica_compute_seconds *= 0.1;
  const auto trace = generate_trace(menu, t, 0.9, 5, 60);
  SimConfig cfg;
  cfg.keep_event_log = true;
  for (const char* alg : {"monkeytree", "sglb", "ecmp"}) {
    const auto a = simulate(t, with(alg), cfg, trace.jobs);
    const auto b = simulate(t, with(alg), cfg, trace.jobs);
    EXPECT_EQ(a.event_hash, b.event_hash) << alg;
    EXPECT_EQ(a.event_log, b.event_log) << alg;
    EXPECT_FALSE(a.event_log.empty());
  }
}

}  // namespace
}  // namespace defragsim

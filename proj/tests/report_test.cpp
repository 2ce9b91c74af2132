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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "defragsim/experiment.hpp"

namespace defragsim {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("defragsim_report_test_" + name);
  fs::remove_all(dir);
  return dir;
}

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "name": "unit",
    "topology": {"racks": 4, "hosts_per_rack": 4, "gpus_per_host": 8, "uplinks_per_tor": 4},
    "workload": {"job_gpus": [8, 16, 32, 64], "iterations": [10, 20], "tp_degrees": [2],
                 "compute_scale": 0.1},
    "trace": {"loads": [0.9], "num_jobs": 30, "seeds": 2, "base_seed": 3},
    "algorithms": ["monkeytree", "ecmp"]
  })");
}

TEST(Percentile, NearestRank) {
  const std::vector<double> v = {10, 1, 9, 2, 8, 3, 7, 4, 6, 5};
  EXPECT_EQ(percentile(v, 50), 5);
  EXPECT_EQ(percentile(v, 90), 9);
  EXPECT_EQ(percentile(v, 99), 10);
  EXPECT_EQ(percentile(v, 100), 10);
  EXPECT_EQ(percentile(v, 1), 1);
  EXPECT_EQ(percentile({4.5}, 99), 4.5);
  EXPECT_THROW(percentile({}, 50), std::invalid_argument);
  EXPECT_THROW(percentile(v, 0), std::invalid_argument);
}

TEST(Report, FormatDoubleRoundTrips) {
  for (double x : {1.0 / 3, 1e-300, 123456789.123456789, 0.1 + 0.2})
    EXPECT_EQ(std::stod(format_double(x)), x);
}

TEST(Report, FrozenColumnSchemas) {
  EXPECT_STREQ(kJobsHeader,
               "job,model,gpus,hosts,tp,pp,arrival,start,end,ideal,slowdown,host_moves,migrations,downtime");
  EXPECT_STREQ(kSeriesHeader,
               "time,max_degree,mean_degree,racks_over,fragmented_groups,running,queued,uplink_utilization");
  EXPECT_STREQ(kSolverHeader, "time,trigger,move_count,nodes,optimal,status,movable_units,widened");
  EXPECT_STREQ(kSolverTimingHeader, "time,move_count,solve_seconds");
  EXPECT_STREQ(kMigrationsHeader,
               "job,plan_time,pause_time,resume_time,duration,downtime,host_moves,bytes");
}

TEST(Report, GoldenJobsRow) {
  RunResult r;
  r.jobs.push_back({7, "gpt3-7b", 16, 2, 1, 1, 0.5, 1.0, 11.0, 10.0, 1.0, 0, 0, 0});
  std::ostringstream s;
  write_jobs_csv(s, r);
  EXPECT_EQ(s.str(), std::string(kJobsHeader) + "\n7,gpt3-7b,16,2,1,1,0.5,1,11,10,1,0,0,0\n");
}

TEST(Config, RejectsUnknownKeys) {
  auto j = small_config();
  j["topology"]["racks_typo"] = 3;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_config();
  j["extra"] = true;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_config();
  j["workload"]["models"] = nlohmann::json::array({{{"name", "x"}, {"weights", 1}}});
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, RejectsBadValues) {
  auto j = small_config();
  j["topology"]["racks"] = "four";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_config();
  j["trace"]["loads"] = {1.5};
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_config();
  j["algorithms"] = {"valiant"};
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_config();
  j["algorithms"] = {"spray"};
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, ThresholdMustCoverTwiceTheRings) {
  auto j = small_config();
  j["workload"]["tp_degrees"] = {4};
  EXPECT_THROW(config_from_json(j), ConfigError);
  j["algorithms"] = {"perfect-only", "ecmp"};
  EXPECT_NO_THROW(config_from_json(j));
  j["algorithms"] = {"monkeytree"};
  j["controller"] = {{"threshold", 8}};
  EXPECT_NO_THROW(config_from_json(j));
}

TEST(Config, ModelsByNameOrInline) {
  auto j = small_config();
  j["workload"]["models"] = nlohmann::json::array(
      {"gpt3-7b", {{"name", "tiny"}, {"parameter_gb", 2}, {"dp", true}, {"replica_compute_seconds", 1}}});
  const auto c = config_from_json(j);
  ASSERT_EQ(c.menu.models.size(), 2u);
  EXPECT_EQ(c.menu.models[1].parameter_bytes, 2 * kGB);
  j["workload"]["models"] = {"no-such-model"};
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Experiment, EmptyTrace) {
  auto j = small_config();
  j["trace"]["num_jobs"] = 0;
  j["trace"]["seeds"] = 1;
  const auto dir = scratch("empty");
  const auto r = run_experiment(config_from_json(j), dir);
  ASSERT_EQ(r.runs.size(), 2u);
  EXPECT_EQ(slurp(dir / "load-0.9" / "seed-3" / "monkeytree" / "jobs.csv"), std::string(kJobsHeader) + "\n");
}

TEST(Experiment, SingleJobAloneIsIdeal) {
  auto j = small_config();
  j["trace"]["num_jobs"] = 1;
  j["trace"]["seeds"] = 1;
  j["algorithms"] = {"monkeytree", "perfect-only", "crux"};
  for (const auto& run : run_experiment(config_from_json(j), std::nullopt).runs) {
    ASSERT_EQ(run.jobs.size(), 1u);
    EXPECT_NEAR(run.jobs[0].slowdown, 1.0, 1e-12);
  }
}

TEST(Experiment, SeedsAreBasePlusIndex) {
  const auto r = run_experiment(config_from_json(small_config()), std::nullopt);
  ASSERT_EQ(r.keys.size(), 4u);
  EXPECT_EQ(r.keys[0].seed, 3u);
  EXPECT_EQ(r.keys[2].seed, 4u);
}

TEST(Experiment, AggregatesMatchRawFiles) {
  const auto dir = scratch("agg");
  const auto r = run_experiment(config_from_json(small_config()), dir);
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  for (const auto& agg : summary.at("aggregate")) {
    std::vector<double> sd;
    for (int seed : {3, 4}) {
      std::istringstream csv(slurp(dir / "load-0.9" / ("seed-" + std::to_string(seed)) /
                                   agg.at("algorithm").get<std::string>() / "jobs.csv"));
      std::string line;
      std::getline(csv, line);
      while (std::getline(csv, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        sd.push_back(std::stod(cells.at(10)));
      }
    }
    double sum = 0;
    for (double x : sd) sum += x;
    EXPECT_EQ(agg.at("jobs").get<std::size_t>(), sd.size());
    EXPECT_DOUBLE_EQ(agg.at("mean_slowdown").get<double>(), sum / sd.size());
    EXPECT_EQ(agg.at("p99_slowdown").get<double>(), percentile(sd, 99));
    EXPECT_EQ(agg.at("p90_slowdown").get<double>(), percentile(sd, 90));
  }
}

TEST(Experiment, RerunIsByteIdentical) {
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  auto j = small_config();
  j["simulation"] = {{"event_log", true}};
  const auto c = config_from_json(j);
  run_experiment(c, a);
  run_experiment(c, b);
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file() || entry.path().filename() == "solver_timing.csv") continue;
    const auto rel = fs::relative(entry.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 10);
}

TEST(Sweep, OversubscriptionMapsToUplinks) {
  auto j = small_config();
  j["sweep"] = {{"oversubscription", {4, 8}}};
  j["algorithms"] = {"ecmp"};
  const auto cells = sweep_cells(config_from_json(j), SweepAxis::kOversubscription);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].config.topology.uplinks_per_tor, 8);
  EXPECT_EQ(cells[1].config.topology.uplinks_per_tor, 4);
  j["sweep"] = {{"oversubscription", {3}}};
  EXPECT_THROW(sweep_cells(config_from_json(j), SweepAxis::kOversubscription), ConfigError);
}

TEST(Sweep, OneCellEqualsRun) {
  auto j = small_config();
  j["sweep"] = {{"thresholds", {4}}};
  const auto c = config_from_json(j);
  const auto grid = run_sweep(c, SweepAxis::kLambda, std::nullopt);
  ASSERT_EQ(grid.size(), 1u);
  EXPECT_EQ(grid[0].at("summary").at("runs"), run_experiment(c, std::nullopt).summary.at("runs"));
}

TEST(Sweep, AxisNames) {
  EXPECT_EQ(sweep_axis_from_name("lambda"), SweepAxis::kLambda);
  EXPECT_EQ(sweep_axis_from_name("load"), SweepAxis::kLoad);
  EXPECT_THROW(sweep_axis_from_name("color"), ConfigError);
}

int cli(const std::string& args) {
  const int status = std::system((std::string(DEFRAGSIM_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "good.json") << small_config().dump();
    auto bad = small_config();
    bad["surprise"] = 1;
    std::ofstream(dir / "bad.json") << bad.dump();
    std::ofstream(dir / "instance.json")
        << R"({"racks": 3, "rack_capacity": 2, "threshold": 0, "jobs": [{"initial": [1, 1, 0]}]})";
  }
  EXPECT_EQ(cli("validate " + (dir / "good.json").string()), 0);
  EXPECT_EQ(cli("validate " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(cli("validate " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(cli("oracle " + (dir / "instance.json").string()), 0);
  EXPECT_EQ(cli("run " + (dir / "good.json").string() + " --seeds 1 --algorithms ecmp --out " +
                (dir / "out").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "out" / "load-0.9" / "seed-3" / "ecmp" / "jobs.csv"));
  EXPECT_EQ(cli("bogus"), 2);
}

TEST(Cli, ShippedConfigsValidate) {
  int n = 0;
  for (const auto& entry : fs::directory_iterator(DEFRAGSIM_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_EQ(cli("validate " + entry.path().string()), 0) << entry.path();
    ++n;
  }
  EXPECT_GT(n, 0);
}

}  // namespace
}  // namespace defragsim

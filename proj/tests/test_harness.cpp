#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "e3dr/harness.hpp"

namespace e3dr {
namespace {

namespace fs = std::filesystem;

const fs::path kConfigs = E3DR_CONFIG_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("e3dr_test_" + name);
  fs::remove_all(d);
  return d;
}

nlohmann::json minimal_json() {
  return {{"K", 3},
          {"horizon", 100},
          {"channels", {{"blocks", {{{"start", 0}, {"means", {0.5, 0.4, 0.3}}}}}}},
          {"population", {{"initial_users", 1}}},
          {"e3dr", {{"T_EP", 1000}, {"T_M", 100}, {"epsilon", 0.2}}}};
}

std::string config_error_field(const nlohmann::json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

TEST(LoadConfig, StaticScenarioFile) {
  const auto c = load_config(kConfigs / "static.json");
  EXPECT_EQ(c.K, 10);
  EXPECT_EQ(c.population.initial_users, 4);
  EXPECT_EQ(c.horizon, 100000);
  EXPECT_EQ(c.runs, 50);
  EXPECT_TRUE(c.population.events.empty());
}

TEST(LoadConfig, ShippedFilesMatchTheGenerators) {
  for (const char* name : {"static", "case1", "case2", "case3"}) {
    auto expect = to_json(scenario(name, 1));
    EXPECT_EQ(to_json(load_config(kConfigs / (std::string(name) + ".json"))), expect) << name;
  }
}

TEST(LoadConfig, ErrorsNameTheField) {
  auto j = minimal_json();
  EXPECT_EQ(config_error_field(j), "");
  j.erase("K");
  EXPECT_EQ(config_error_field(j), "K");

  j = minimal_json();
  j["K"] = "ten";
  EXPECT_EQ(config_error_field(j), "K");

  j = minimal_json();
  j["algorithm"] = "greedy";
  EXPECT_EQ(config_error_field(j), "algorithm");

  j = minimal_json();
  j["population"].erase("initial_users");
  EXPECT_EQ(config_error_field(j), "population.initial_users");

  j = minimal_json();
  j["channels"]["blocks"][0]["means"] = {0.5, 0.4};
  EXPECT_EQ(config_error_field(j), "channels.blocks");
}

TEST(LoadConfig, PsiBelowThresholdIsRejected) {
  auto j = minimal_json();
  j["e3dr"]["psi"] = 0.03;
  try {
    config_from_json(j);
    FAIL() << "accepted psi = 0.03";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "e3dr.psi");
    EXPECT_NE(std::string(e.what()).find("0.05"), std::string::npos);
  }
}

TEST(LoadConfig, MissingOrMalformedFile) {
  EXPECT_THROW(load_config(kConfigs / "no_such_file.json"), std::runtime_error);
  const auto d = scratch_dir("malformed");
  fs::create_directories(d);
  std::ofstream(d / "bad.json") << "{ \"K\": ";
  EXPECT_THROW(load_config(d / "bad.json"), std::runtime_error);
}

TEST(Scenario, Structure) {
  using Kind = PopulationEvent::Kind;
  auto count = [](const ExperimentConfig& c, Kind k) {
    return std::count_if(c.population.events.begin(), c.population.events.end(),
                         [&](const auto& e) { return e.kind == k; });
  };
  const auto s = scenario("static", 1);
  EXPECT_EQ(s.channels.random_change_slots.size(), 1u);
  EXPECT_TRUE(s.population.events.empty());
  EXPECT_EQ(s.population.initial_users, 4);

  const auto c1 = scenario("case1", 1);
  EXPECT_EQ(c1.channels.random_change_slots.size(), 1u);
  EXPECT_GE(count(c1, Kind::Arrival), 1);
  EXPECT_GE(count(c1, Kind::Departure), 1);
  EXPECT_EQ(c1.population.initial_users, 5);

  const auto c2 = scenario("case2", 1);
  EXPECT_GE(c2.channels.random_change_slots.size(), 2u);
  EXPECT_TRUE(c2.population.events.empty());

  const auto c3 = scenario("case3", 1);
  EXPECT_GE(c3.channels.random_change_slots.size(), 2u);
  EXPECT_FALSE(c3.population.events.empty());

  EXPECT_THROW(scenario("case4", 1), std::invalid_argument);
}

TEST(BuildProcess, RandomMeansPerBlockAndSeed) {
  const auto cfg = scenario("case2", 1);
  const auto a = build_process(cfg, 10);
  ASSERT_EQ(a.blocks.size(), 5u);
  for (const auto& b : a.blocks)
    for (double m : b.means) {
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, 1.0);
    }
  EXPECT_EQ(build_process(cfg, 10).blocks[3].means, a.blocks[3].means);
  EXPECT_NE(build_process(cfg, 11).blocks[0].means, a.blocks[0].means);
}

TEST(BuildSchedule, RandomDeparturesPickActiveUsers) {
  const auto cfg = scenario("case1", 1);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = build_schedule(cfg, seed);  // validate() rejects departures of inactive users
    EXPECT_EQ(s.arrivals(), 2);
    EXPECT_EQ(s.departures(), 3);
  }
}

ExperimentConfig small_config() { return load_config(kConfigs / "explicit_blocks.json"); }

TEST(RunExperiment, Deterministic) {
  auto cfg = small_config();
  cfg.runs = 2;
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  EXPECT_EQ(a.regret, b.regret);
  EXPECT_EQ(a.collisions, b.collisions);
}

TEST(RunExperiment, AddingRunsLeavesEarlierRunsAlone) {
  auto cfg = small_config();
  cfg.runs = 2;
  const auto two = run_experiment(cfg);
  cfg.runs = 3;
  const auto three = run_experiment(cfg);
  EXPECT_EQ(three.regret[0], two.regret[0]);
  EXPECT_EQ(three.regret[1], two.regret[1]);
}

TEST(RunExperiment, SummaryMeanMatchesTraceRecomputation) {
  const auto cfg = small_config();
  std::vector<std::vector<double>> recomputed;
  const auto res = run_experiment(cfg, [&](int, const RunResult& run, const ChannelProcess& p,
                                           const PopulationSchedule& s) {
    recomputed.push_back(pseudo_regret(run.trace, p, s));
  });
  ASSERT_EQ(recomputed.size(), static_cast<std::size_t>(cfg.runs));
  for (const auto& row : res.summary) {
    double sum = 0.0;
    for (const auto& r : recomputed) sum += r[static_cast<std::size_t>(row.slot - 1)];
    EXPECT_NEAR(row.mean_regret, sum / cfg.runs, 1e-9) << "slot " << row.slot;
  }
}

TEST(Summarize, StandardErrorByHand) {
  ExperimentResult r;
  r.regret = {{1.0, 2.0}, {3.0, 6.0}};
  r.collisions = {{0, 1}, {2, 3}};
  const auto rows = summarize(r, 2, 1);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].mean_regret, 2.0);
  EXPECT_DOUBLE_EQ(rows[0].stderr_regret, 1.0);  // sd sqrt(2), over sqrt(2)
  EXPECT_DOUBLE_EQ(rows[1].mean_regret, 4.0);
  EXPECT_DOUBLE_EQ(rows[1].stderr_regret, 2.0);
  EXPECT_DOUBLE_EQ(rows[1].mean_collisions, 2.0);
}

TEST(RecordedSlots, Decimation) {
  EXPECT_EQ(recorded_slots(100000, 100).size(), 1000u);
  EXPECT_EQ(recorded_slots(1000, 300), (std::vector<Slot>{300, 600, 900, 1000}));
  EXPECT_EQ(recorded_slots(5, 100), (std::vector<Slot>{5}));
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

TEST(WriteOutputs, FilesAndSchemas) {
  auto cfg = small_config();
  cfg.output.dir = scratch_dir("outputs").string();
  write_outputs(cfg);
  const fs::path d = cfg.output.dir;

  const auto summary = read_csv(d / "summary.csv");
  ASSERT_FALSE(summary.empty());
  EXPECT_EQ(summary[0], (std::vector<std::string>{"slot", "mean_regret", "stderr_regret", "mean_collisions"}));
  EXPECT_EQ(summary.size(), 1 + recorded_slots(cfg.horizon, cfg.output.stride).size());

  const auto trace = read_csv(d / "trace_run0.csv");
  ASSERT_FALSE(trace.empty());
  EXPECT_EQ(trace[0],
            (std::vector<std::string>{"slot", "user", "phase", "action_kind", "channel", "reward", "collided"}));
  bool saw_collision = false, saw_idle = false;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    ASSERT_EQ(trace[i].size(), 7u) << "row " << i;
    if (trace[i][6] == "1") {
      saw_collision = true;
      EXPECT_EQ(trace[i][5], "0");
      EXPECT_EQ(trace[i][3], "transmit");
    }
    if (trace[i][3] == "idle") {
      saw_idle = true;
      EXPECT_EQ(trace[i][4], "");
    }
  }
  EXPECT_TRUE(saw_collision);
  EXPECT_TRUE(saw_idle);
  EXPECT_TRUE(fs::exists(d / "trace_run2.csv"));
  EXPECT_TRUE(fs::exists(d / "config.json"));
}

TEST(WriteOutputs, EchoedConfigReproducesSummary) {
  auto cfg = small_config();
  cfg.output.traces = false;
  cfg.output.dir = scratch_dir("echo_a").string();
  write_outputs(cfg);

  auto again = load_config(fs::path(cfg.output.dir) / "config.json");
  again.output.dir = scratch_dir("echo_b").string();
  write_outputs(again);
  EXPECT_EQ(slurp(fs::path(again.output.dir) / "summary.csv"), slurp(fs::path(cfg.output.dir) / "summary.csv"));
}

TEST(WriteOutputs, UnwritableDirectoryNamesThePath) {
  auto cfg = small_config();
  const auto blocker = scratch_dir("blocker");
  std::ofstream(blocker) << "not a directory";
  cfg.output.dir = (blocker / "sub").string();
  EXPECT_ANY_THROW(write_outputs(cfg));
}

TEST(RunExperiment, UniformRandomIsWorseThanE3drInEveryRun) {
  auto cfg = scenario("static", 3);
  cfg.runs = 10;
  cfg.horizon = 36000;
  const auto e3dr_res = run_experiment(cfg);
  cfg.algorithm = Algorithm::UniformRandom;
  const auto uniform = run_experiment(cfg);
  for (int r = 0; r < cfg.runs; ++r)
    EXPECT_GT(uniform.regret[static_cast<std::size_t>(r)].back(), e3dr_res.regret[static_cast<std::size_t>(r)].back());
}

}  // namespace
}  // namespace e3dr

// Command-line front end: run a config, run a named scenario, or print the
// regret/collision bounds implied by a config.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "e3dr/harness.hpp"
#include "e3dr/metrics.hpp"

namespace {

struct Overrides {
  std::optional<int> runs;
  std::optional<e3dr::Slot> horizon;
  std::optional<e3dr::Slot> stride;
  std::optional<std::string> out;
  std::optional<std::string> algorithm;
  bool traces{false};

  void attach(CLI::App* cmd) {
    cmd->add_option("--runs", runs, "Number of seeded repetitions");
    cmd->add_option("--horizon", horizon, "Slots per run");
    cmd->add_option("--stride", stride, "Summary decimation stride");
    cmd->add_option("--out", out, "Output directory");
    cmd->add_option("--algorithm", algorithm, "e3dr | mctopm_known_n | uniform_random");
    cmd->add_flag("--traces", traces, "Also write per-run trace CSVs");
  }

  void apply(e3dr::ExperimentConfig& cfg) const {
    if (runs) cfg.runs = *runs;
    if (horizon) cfg.horizon = *horizon;
    if (stride) cfg.output.stride = *stride;
    if (out) cfg.output.dir = *out;
    if (algorithm) cfg.algorithm = e3dr::parse_algorithm(*algorithm);
    if (traces) cfg.output.traces = true;
    cfg.validate();
  }
};

int execute(const e3dr::ExperimentConfig& cfg) {
  const auto res = e3dr::write_outputs(cfg);
  const auto& last = res.summary.back();
  std::printf("%s: %d runs x %lld slots, final regret %.2f +- %.2f, collisions %.1f -> %s\n",
              std::string(e3dr::to_string(cfg.algorithm)).c_str(), cfg.runs, static_cast<long long>(cfg.horizon),
              last.mean_regret, last.stderr_regret, last.mean_collisions, cfg.output.dir.c_str());
  return 0;
}

int print_bounds(const e3dr::ExperimentConfig& cfg, double c_log) {
  int arrivals = 0, departures = 0;
  for (const auto& e : cfg.population.events)
    (e.kind == e3dr::PopulationEvent::Kind::Arrival ? arrivals : departures) += 1;
  const auto b =
      e3dr::BoundParams::from(cfg.e3dr, cfg.population.initial_users, cfg.horizon, arrivals, departures, c_log);
  std::printf("T_O             %.0f\n", b.T_O);
  std::printf("T_Est           %.0f\n", b.T_Est);
  std::printf("T_D             %.0f\n", b.T_D);
  std::printf("T_DD            %.0f\n", b.T_DD);
  std::printf("sub-cycles (x)  %.0f\n", b.sub_cycles());
  std::printf("R_SE            %.3f\n", b.single_epoch_regret());
  std::printf("regret bound    %.3f\n", e3dr::regret_bound(b));
  std::printf("collision bound %.3f\n", e3dr::collision_bound(b));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed channel allocation simulator (E3DR, MCTopM, uniform random)"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides run_ov;
  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run->add_option("config", config_path, "Config file")->required();
  run_ov.attach(run);

  std::string name;
  std::uint64_t seed = 1;
  Overrides sc_ov;
  auto* sc = app.add_subcommand("scenario", "Run a reference scenario: static, case1, case2 or case3");
  sc->add_option("name", name, "Scenario name")->required();
  sc->add_option("--seed", seed, "Base seed");
  sc_ov.attach(sc);

  std::string bounds_path;
  double c_log = 0.0;
  auto* bounds = app.add_subcommand("bounds", "Print the regret and collision bounds for a config");
  bounds->add_option("config", bounds_path, "Config file")->required();
  bounds->add_option("--c-log", c_log, "Constant multiplying log T in the explore-exploit terms");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = e3dr::load_config(config_path);
      run_ov.apply(cfg);
      return execute(cfg);
    }
    if (*sc) {
      auto cfg = e3dr::scenario(name, seed);
      sc_ov.apply(cfg);
      return execute(cfg);
    }
    if (*bounds) return print_bounds(e3dr::load_config(bounds_path), c_log);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

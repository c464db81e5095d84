#pragma once

// Experiment driver: JSON config -> R seeded runs -> averaged regret curves
// and CSV outputs. Also generates the four reference scenarios.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "e3dr/agent.hpp"
#include "e3dr/env.hpp"
#include "e3dr/metrics.hpp"
#include "e3dr/rng.hpp"
#include "e3dr/simulation.hpp"

namespace e3dr {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error("config field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ChannelSpec {
  // Either explicit blocks, or fresh uniform means per run at each change slot.
  std::vector<ChannelBlock> blocks;
  std::vector<Slot> random_change_slots;

  bool is_random() const { return blocks.empty(); }
};

struct PopulationEventSpec {
  Slot slot{0};
  PopulationEvent::Kind kind{PopulationEvent::Kind::Arrival};
  std::optional<UserId> user;  // departures only; empty means "a random active user"
};

struct PopulationSpec {
  int initial_users{0};
  std::vector<PopulationEventSpec> events;
};

struct OutputSpec {
  std::string dir{"out"};
  Slot stride{100};
  bool traces{false};
};

struct ExperimentConfig {
  int K{0};
  Slot horizon{0};
  int runs{1};
  std::uint64_t base_seed{0};
  Algorithm algorithm{Algorithm::E3dr};
  E3drParams e3dr;
  ChannelSpec channels;
  PopulationSpec population;
  OutputSpec output;

  void validate() const {
    if (K < 1) throw ConfigError("K", "must be a positive integer");
    if (horizon < 1) throw ConfigError("horizon", "must be at least 1");
    if (runs < 1) throw ConfigError("runs", "must be at least 1");
    if (output.stride < 1) throw ConfigError("output.stride", "must be at least 1");
    try {
      e3dr.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("e3dr", e.what());
    }
    if (channels.is_random()) {
      const auto& cs = channels.random_change_slots;
      if (cs.empty() || cs.front() != 0)
        throw ConfigError("channels.random_means.change_slots", "must start with slot 0");
      for (std::size_t i = 1; i < cs.size(); ++i)
        if (cs[i] <= cs[i - 1]) throw ConfigError("channels.random_means.change_slots", "must be strictly increasing");
    } else {
      try {
        ChannelProcess{K, channels.blocks}.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError("channels.blocks", e.what());
      }
    }
    if (population.initial_users < 0) throw ConfigError("population.initial_users", "must be nonnegative");
  }
};

/// Seed of run r. Runs are seeded independently, so adding runs never
/// changes earlier ones.
inline std::uint64_t run_seed(std::uint64_t base_seed, int r) {
  return mix64(base_seed, static_cast<std::uint64_t>(r));
}

inline ChannelProcess build_process(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.channels.is_random()) return {cfg.K, cfg.channels.blocks};
  Rng rng(mix64(seed, stream::kChannelMeans));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ChannelProcess p{cfg.K, {}};
  for (Slot start : cfg.channels.random_change_slots) {
    ChannelBlock b{start, std::vector<double>(static_cast<std::size_t>(cfg.K))};
    for (auto& m : b.means) m = u(rng);
    p.blocks.push_back(std::move(b));
  }
  return p;
}

inline PopulationSchedule build_schedule(const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng rng(mix64(seed, stream::kPopulation));
  PopulationSchedule s{cfg.population.initial_users, {}};
  std::vector<UserId> active;
  for (UserId u = 0; u < s.initial_users; ++u) active.push_back(u);
  for (const auto& e : cfg.population.events) {
    if (e.kind == PopulationEvent::Kind::Arrival) {
      active.push_back(s.add_arrival(e.slot));
      continue;
    }
    UserId u;
    if (e.user) {
      u = *e.user;
    } else {
      if (active.empty()) throw ConfigError("population.events", "departure with no active user");
      u = active[static_cast<std::size_t>(uniform_index(rng, static_cast<int>(active.size())))];
    }
    std::erase(active, u);
    s.add_departure(e.slot, u);
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("population.events", e.what());
  }
  return s;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path + key, "missing");
  return j.at(key);
}

template <class T>
T get(const nlohmann::json& j, const char* key, const std::string& path) {
  const auto& v = require(j, key, path);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + key, "has the wrong type");
  }
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, const std::string& path, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key, path);
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::get;
  using detail::get_or;
  ExperimentConfig c;
  c.K = get<int>(j, "K", "");
  c.horizon = get<Slot>(j, "horizon", "");
  c.runs = get_or<int>(j, "runs", "", 1);
  c.base_seed = get_or<std::uint64_t>(j, "base_seed", "", 0);
  try {
    c.algorithm = parse_algorithm(get_or<std::string>(j, "algorithm", "", "e3dr"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("algorithm", e.what());
  }

  const auto e = j.value("e3dr", nlohmann::json::object());
  c.e3dr.K = c.K;
  c.e3dr.delta = get_or<double>(e, "delta", "e3dr.", c.e3dr.delta);
  c.e3dr.epsilon = get_or<double>(e, "epsilon", "e3dr.", c.e3dr.epsilon);
  c.e3dr.psi = get_or<double>(e, "psi", "e3dr.", c.e3dr.psi);
  c.e3dr.T_M = get_or<Slot>(e, "T_M", "e3dr.", c.e3dr.T_M);
  c.e3dr.T_EP = get_or<Slot>(e, "T_EP", "e3dr.", c.e3dr.T_EP);
  c.e3dr.sensing_capable = get_or<bool>(e, "sensing", "e3dr.", c.e3dr.sensing_capable);
  if (!(c.e3dr.psi > 0.05)) throw ConfigError("e3dr.psi", "must exceed 0.05 (psi > 0.05 avoids frequent resets)");

  const auto& ch = detail::require(j, "channels", "");
  if (ch.contains("blocks")) {
    for (const auto& b : ch.at("blocks"))
      c.channels.blocks.push_back({get<Slot>(b, "start", "channels.blocks[]."),
                                   get<std::vector<double>>(b, "means", "channels.blocks[].")});
    if (c.channels.blocks.empty()) throw ConfigError("channels.blocks", "must not be empty");
  } else if (ch.contains("random_means")) {
    c.channels.random_change_slots =
        get_or<std::vector<Slot>>(ch.at("random_means"), "change_slots", "channels.random_means.", {0});
  } else {
    throw ConfigError("channels", "needs either 'blocks' or 'random_means'");
  }

  const auto& pop = detail::require(j, "population", "");
  c.population.initial_users = get<int>(pop, "initial_users", "population.");
  for (const auto& ev : pop.value("events", nlohmann::json::array())) {
    PopulationEventSpec s;
    s.slot = get<Slot>(ev, "slot", "population.events[].");
    const auto type = get<std::string>(ev, "type", "population.events[].");
    if (type == "arrival") {
      s.kind = PopulationEvent::Kind::Arrival;
    } else if (type == "departure") {
      s.kind = PopulationEvent::Kind::Departure;
      if (ev.contains("user")) s.user = get<UserId>(ev, "user", "population.events[].");
    } else {
      throw ConfigError("population.events[].type", "must be 'arrival' or 'departure'");
    }
    c.population.events.push_back(s);
  }

  const auto out = j.value("output", nlohmann::json::object());
  c.output.dir = get_or<std::string>(out, "dir", "output.", c.output.dir);
  c.output.stride = get_or<Slot>(out, "stride", "output.", c.output.stride);
  c.output.traces = get_or<bool>(out, "traces", "output.", c.output.traces);

  c.validate();
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["K"] = c.K;
  j["horizon"] = c.horizon;
  j["runs"] = c.runs;
  j["base_seed"] = c.base_seed;
  j["algorithm"] = std::string(to_string(c.algorithm));
  j["e3dr"] = {{"delta", c.e3dr.delta}, {"epsilon", c.e3dr.epsilon}, {"psi", c.e3dr.psi},
               {"T_M", c.e3dr.T_M},     {"T_EP", c.e3dr.T_EP},       {"sensing", c.e3dr.sensing_capable}};
  if (c.channels.is_random()) {
    j["channels"]["random_means"]["change_slots"] = c.channels.random_change_slots;
  } else {
    auto& blocks = j["channels"]["blocks"] = nlohmann::json::array();
    for (const auto& b : c.channels.blocks) blocks.push_back({{"start", b.start}, {"means", b.means}});
  }
  j["population"]["initial_users"] = c.population.initial_users;
  auto& evs = j["population"]["events"] = nlohmann::json::array();
  for (const auto& e : c.population.events) {
    nlohmann::json ev{{"slot", e.slot},
                      {"type", e.kind == PopulationEvent::Kind::Arrival ? "arrival" : "departure"}};
    if (e.user) ev["user"] = *e.user;
    evs.push_back(ev);
  }
  j["output"] = {{"dir", c.output.dir}, {"stride", c.output.stride}, {"traces", c.output.traces}};
  return j;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("cannot parse config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Scenarios

inline ExperimentConfig scenario(const std::string& name, std::uint64_t seed) {
  using Kind = PopulationEvent::Kind;
  ExperimentConfig c;
  c.K = 10;
  c.horizon = 100000;
  c.runs = 50;
  c.base_seed = seed;
  c.algorithm = Algorithm::E3dr;
  c.e3dr.K = c.K;
  c.output.dir = "out/" + name;
  c.channels.random_change_slots = {0};
  c.population.initial_users = 4;

  if (name == "static") {
    // one block, four users for the whole horizon
  } else if (name == "case1") {
    c.population.initial_users = 5;
    c.population.events = {{15000, Kind::Arrival, {}},   {30000, Kind::Departure, {}},
                           {50000, Kind::Arrival, {}},   {65000, Kind::Departure, {}},
                           {80000, Kind::Departure, {}}};
  } else if (name == "case2") {
    c.channels.random_change_slots = {0, 20000, 40000, 60000, 80000};
  } else if (name == "case3") {
    c.channels.random_change_slots = {0, 25000, 50000, 75000};
    c.population.events = {{15000, Kind::Arrival, {}},   {35000, Kind::Departure, {}},
                           {55000, Kind::Arrival, {}},   {85000, Kind::Departure, {}}};
  } else {
    throw std::invalid_argument("unknown scenario '" + name + "' (expected static, case1, case2 or case3)");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Running

struct SummaryRow {
  Slot slot{0};  // slots elapsed
  double mean_regret{0.0};
  double stderr_regret{0.0};
  double mean_collisions{0.0};
};

struct ExperimentResult {
  std::vector<std::vector<double>> regret;      // [run][slot], cumulative
  std::vector<std::vector<long>> collisions;    // [run][slot], cumulative
  std::vector<SummaryRow> summary;
};

inline std::vector<Slot> recorded_slots(Slot horizon, Slot stride) {
  std::vector<Slot> out;
  for (Slot t = stride; t <= horizon; t += stride) out.push_back(t);
  if (out.empty() || out.back() != horizon) out.push_back(horizon);
  return out;
}

inline std::vector<SummaryRow> summarize(const ExperimentResult& r, Slot horizon, Slot stride) {
  std::vector<SummaryRow> rows;
  const double R = static_cast<double>(r.regret.size());
  for (Slot elapsed : recorded_slots(horizon, stride)) {
    const auto t = static_cast<std::size_t>(elapsed - 1);
    double sum = 0.0, coll = 0.0;
    for (std::size_t i = 0; i < r.regret.size(); ++i) {
      sum += r.regret[i][t];
      coll += static_cast<double>(r.collisions[i][t]);
    }
    const double mean = sum / R;
    double var = 0.0;
    for (const auto& run : r.regret) var += (run[t] - mean) * (run[t] - mean);
    const double se = R > 1 ? std::sqrt(var / (R - 1)) / std::sqrt(R) : 0.0;
    rows.push_back({elapsed, mean, se, coll / R});
  }
  return rows;
}

using RunObserver = std::function<void(int run, const RunResult&, const ChannelProcess&, const PopulationSchedule&)>;

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunObserver& observer = {}) {
  cfg.validate();
  ExperimentResult res;
  for (int r = 0; r < cfg.runs; ++r) {
    const auto seed = run_seed(cfg.base_seed, r);
    const auto process = build_process(cfg, seed);
    const auto schedule = build_schedule(cfg, seed);
    auto run = run_algorithm(cfg.algorithm, cfg.e3dr, process, schedule, seed, cfg.horizon);
    if (observer) observer(r, run, process, schedule);
    res.regret.push_back(std::move(run.regret));
    res.collisions.push_back(std::move(run.collisions));
  }
  res.summary = summarize(res, cfg.horizon, cfg.output.stride);
  return res;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace detail

inline void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  auto out = detail::open_out(path);
  out << "slot,mean_regret,stderr_regret,mean_collisions\n";
  for (const auto& r : rows)
    out << r.slot << ',' << detail::fmt_double(r.mean_regret) << ',' << detail::fmt_double(r.stderr_regret) << ','
        << detail::fmt_double(r.mean_collisions) << '\n';
}

inline void write_trace_csv(const std::filesystem::path& path, const RunTrace& trace) {
  auto out = detail::open_out(path);
  out << "slot,user,phase,action_kind,channel,reward,collided\n";
  for (Slot t = 0; t < trace.slots(); ++t)
    for (const auto& r : trace.at(t)) {
      out << t << ',' << r.user << ',' << to_string(r.phase) << ',' << to_string(r.action.kind) << ',';
      if (r.action.kind != ActionKind::Idle) out << r.action.channel;
      out << ',' << detail::fmt_double(r.reward) << ',' << (r.collided ? 1 : 0) << '\n';
    }
}

inline void write_config_echo(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  auto out = detail::open_out(path);
  out << to_json(cfg).dump(2) << '\n';
}

/// Runs the experiment and writes summary.csv, config.json and, when
/// requested, one trace_run<r>.csv per run into cfg.output.dir.
inline ExperimentResult write_outputs(const ExperimentConfig& cfg) {
  const std::filesystem::path dir = cfg.output.dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  RunObserver obs;
  if (cfg.output.traces)
    obs = [&](int r, const RunResult& run, const ChannelProcess&, const PopulationSchedule&) {
      write_trace_csv(dir / ("trace_run" + std::to_string(r) + ".csv"), run.trace);
    };
  auto res = run_experiment(cfg, obs);
  write_summary_csv(dir / "summary.csv", res.summary);
  write_config_echo(dir / "config.json", cfg);
  return res;
}

}  // namespace e3dr

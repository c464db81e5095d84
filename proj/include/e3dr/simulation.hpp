#pragma once

// Drives one seeded run: an Environment plus one agent per active user,
// stepped synchronously slot by slot.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "e3dr/agent.hpp"
#include "e3dr/env.hpp"
#include "e3dr/mctopm.hpp"
#include "e3dr/metrics.hpp"
#include "e3dr/rng.hpp"
#include "e3dr/types.hpp"

namespace e3dr {

/// MCTopM told the true number of active users every slot.
class McTopMAgent {
 public:
  McTopMAgent(int K, std::uint64_t seed) : rng_(seed) { state_ = McTopMState(K, uniform_index(rng_, K)); }

  Action decide(const SlotContext& ctx) {
    n_ = ctx.active_users;
    return Action::transmit(state_.current_arm);
  }
  void observe(const Observation& obs) {
    mctopm_update(state_, state_.current_arm, obs);
    mctopm_step(state_, n_, obs, rng_);
  }
  Phase phase() const { return Phase::ExploreExploit; }
  const McTopMState& state() const { return state_; }

 private:
  Rng rng_;
  McTopMState state_;
  int n_{1};
};

class UniformAgent {
 public:
  UniformAgent(int K, std::uint64_t seed) : K_(K), rng_(seed) {}
  Action decide(const SlotContext&) { return Action::transmit(uniform_index(rng_, K_)); }
  void observe(const Observation&) {}
  Phase phase() const { return Phase::ExploreExploit; }

 private:
  int K_;
  Rng rng_;
};

enum class Algorithm { E3dr, McTopMKnownN, UniformRandom };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::E3dr: return "e3dr";
    case Algorithm::McTopMKnownN: return "mctopm_known_n";
    case Algorithm::UniformRandom: return "uniform_random";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "e3dr") return Algorithm::E3dr;
  if (s == "mctopm_known_n") return Algorithm::McTopMKnownN;
  if (s == "uniform_random") return Algorithm::UniformRandom;
  throw std::invalid_argument("unknown algorithm '" + std::string(s) +
                              "' (expected e3dr, mctopm_known_n or uniform_random)");
}

struct RunResult {
  RunTrace trace;
  std::vector<double> regret;     // cumulative pseudo-regret per slot
  std::vector<long> collisions;   // cumulative collided user-slots
  CollisionTally tally;

  // E3DR diagnostics; empty for the baselines.
  std::map<Slot, int> resets;     // slot -> number of agents that reset there
  long signaling_rounds{0};
  long consensus_failures{0};
  long anomalies{0};
};

inline std::uint64_t agent_seed(std::uint64_t run_seed, UserId u) {
  return mix64(run_seed, stream::kAgents, static_cast<std::uint64_t>(u));
}

template <class Agent, class Factory>
RunResult simulate(const ChannelProcess& process, const PopulationSchedule& schedule, std::uint64_t seed,
                   Slot horizon, Factory make_agent) {
  Environment env(process, schedule, seed);
  std::map<UserId, Agent> agents;
  for (UserId u : env.active_users()) agents.emplace(u, make_agent(agent_seed(seed, u)));

  RunResult out;
  out.regret.reserve(static_cast<std::size_t>(horizon));
  out.collisions.reserve(static_cast<std::size_t>(horizon));
  double regret = 0.0;

  auto harvest = [&](const Agent& a) {
    if constexpr (requires { a.resets(); }) {
      for (Slot s : a.resets()) ++out.resets[s];
      out.anomalies += a.anomalies();
    }
  };

  std::map<UserId, Action> actions;
  for (Slot t = 0; t < horizon; ++t) {
    const SlotContext ctx{t, static_cast<int>(agents.size())};
    actions.clear();
    for (auto& [u, a] : agents) actions.emplace(u, a.decide(ctx));
    const auto obs = env.step(actions);

    for (auto& [u, a] : agents) {
      const auto& o = obs.at(u);
      a.observe(o);
      const auto& act = actions.at(u);
      out.trace.add({u, act, o.reward, o.collided, a.phase()});
      if (o.collided) out.tally.add(a.phase());
    }
    out.trace.close_slot();

    if constexpr (requires(const Agent& a) { a.signaling_round_closed(); }) {
      int closed = 0, detecting = 0, raised = 0;
      for (const auto& [u, a] : agents) {
        if (a.phase() != Phase::Detect) continue;
        ++detecting;
        if (a.signaling_round_closed()) {
          ++closed;
          raised += a.d_flag() ? 1 : 0;
        }
      }
      if (closed > 0) {
        ++out.signaling_rounds;
        if (closed != detecting || (raised != 0 && raised != closed)) ++out.consensus_failures;
      }
    }

    regret += regret_increment(out.trace.at(t), process.means_at(t));
    out.regret.push_back(regret);
    out.collisions.push_back(out.tally.total);

    for (UserId u : env.last_departures()) {
      harvest(agents.at(u));
      agents.erase(u);
    }
    for (UserId u : env.last_arrivals()) agents.emplace(u, make_agent(agent_seed(seed, u)));
  }
  for (const auto& [u, a] : agents) harvest(a);
  return out;
}

inline RunResult run_algorithm(Algorithm algo, const E3drParams& params, const ChannelProcess& process,
                               const PopulationSchedule& schedule, std::uint64_t seed, Slot horizon) {
  const int K = process.K;
  switch (algo) {
    case Algorithm::E3dr:
      return simulate<E3drAgent>(process, schedule, seed, horizon,
                                 [&](std::uint64_t s) { return E3drAgent(params, s); });
    case Algorithm::McTopMKnownN:
      return simulate<McTopMAgent>(process, schedule, seed, horizon,
                                   [&](std::uint64_t s) { return McTopMAgent(K, s); });
    case Algorithm::UniformRandom:
      return simulate<UniformAgent>(process, schedule, seed, horizon,
                                    [&](std::uint64_t s) { return UniformAgent(K, s); });
  }
  throw std::logic_error("unreachable");
}

}  // namespace e3dr

#pragma once

#include <cstdint>
#include <string_view>

namespace e3dr {

// Channels are 0-based throughout the library: valid indices are [0, K).
using Channel = int;
using Slot = std::int64_t;
using UserId = int;

enum class ActionKind : std::uint8_t { Idle, Transmit, Sense };

struct Action {
  ActionKind kind{ActionKind::Idle};
  Channel channel{-1};

  static constexpr Action idle() { return {}; }
  static constexpr Action transmit(Channel k) { return {ActionKind::Transmit, k}; }
  static constexpr Action sense(Channel k) { return {ActionKind::Sense, k}; }

  friend bool operator==(const Action&, const Action&) = default;
};

// reward/collided are meaningful for Transmit only, busy for Sense only.
struct Observation {
  ActionKind kind{ActionKind::Idle};
  double reward{0.0};
  bool collided{false};
  bool busy{false};

  friend bool operator==(const Observation&, const Observation&) = default;
};

// What every agent sees before choosing an action.
struct SlotContext {
  Slot slot{0};
  int active_users{0};
};

enum class Phase : std::uint8_t {
  Waiting,  // arrived, not yet admitted to an OR phase
  Or,
  Estimate,
  ExploreExploit,
  Detect,
  BackedOff,
};

inline constexpr int kPhaseCount = 6;

constexpr std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Waiting: return "waiting";
    case Phase::Or: return "or";
    case Phase::Estimate: return "estimate";
    case Phase::ExploreExploit: return "explore_exploit";
    case Phase::Detect: return "detect";
    case Phase::BackedOff: return "backed_off";
  }
  return "?";
}

constexpr std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::Idle: return "idle";
    case ActionKind::Transmit: return "transmit";
    case ActionKind::Sense: return "sense";
  }
  return "?";
}

}  // namespace e3dr

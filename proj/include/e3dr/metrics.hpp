#pragma once

// Pseudo-regret against the block-wise top-N oracle, collision tallies, and
// numeric evaluation of the regret and collision upper bounds.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "e3dr/agent.hpp"
#include "e3dr/env.hpp"
#include "e3dr/types.hpp"

namespace e3dr {

struct TraceRecord {
  UserId user{-1};
  Action action;
  double reward{0.0};
  bool collided{false};
  Phase phase{Phase::Waiting};
};

// One record per active user per slot, flattened.
class RunTrace {
 public:
  void add(const TraceRecord& r) { records_.push_back(r); }
  void close_slot() { offsets_.push_back(records_.size()); }

  Slot slots() const { return static_cast<Slot>(offsets_.size()) - 1; }
  std::span<const TraceRecord> at(Slot t) const {
    const auto b = offsets_[static_cast<std::size_t>(t)];
    const auto e = offsets_[static_cast<std::size_t>(t) + 1];
    return std::span<const TraceRecord>(records_).subspan(b, e - b);
  }
  const std::vector<TraceRecord>& records() const { return records_; }

 private:
  std::vector<TraceRecord> records_;
  std::vector<std::size_t> offsets_{0};
};

/// Sum of the min(N, K) largest means.
inline double optimal_rate(std::span<const double> means, int n_users) {
  std::vector<double> m(means.begin(), means.end());
  const auto n = static_cast<std::size_t>(std::clamp(n_users, 0, static_cast<int>(m.size())));
  std::partial_sort(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n), m.end(), std::greater<>());
  return std::accumulate(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
}

/// Active-user count per slot implied by a population schedule.
inline std::vector<int> active_counts(const PopulationSchedule& schedule, Slot horizon) {
  std::vector<int> n(static_cast<std::size_t>(horizon));
  int active = schedule.initial_users;
  std::size_t next = 0;
  for (Slot t = 0; t < horizon; ++t) {
    n[static_cast<std::size_t>(t)] = active;
    while (next < schedule.events.size() && schedule.events[next].slot <= t) {
      active += schedule.events[next].kind == PopulationEvent::Kind::Arrival ? 1 : -1;
      ++next;
    }
  }
  return n;
}

/// Per-slot regret: oracle rate for the slot's block and population minus the
/// expected throughput of the collision-free transmissions actually made.
inline double regret_increment(std::span<const TraceRecord> slot_records, std::span<const double> means) {
  double got = 0.0;
  const int K = static_cast<int>(means.size());
  for (const auto& r : slot_records) {
    if (r.action.kind != ActionKind::Transmit) continue;
    if (r.action.channel < 0 || r.action.channel >= K)
      throw std::out_of_range("trace: channel " + std::to_string(r.action.channel) + " outside process");
    if (!r.collided) got += means[static_cast<std::size_t>(r.action.channel)];
  }
  return optimal_rate(means, static_cast<int>(slot_records.size())) - got;
}

/// Cumulative pseudo-regret series, one entry per slot.
inline std::vector<double> pseudo_regret(const RunTrace& trace, const ChannelProcess& process,
                                         const PopulationSchedule& schedule) {
  const auto counts = active_counts(schedule, trace.slots());
  std::vector<double> cum(static_cast<std::size_t>(trace.slots()));
  double acc = 0.0;
  for (Slot t = 0; t < trace.slots(); ++t) {
    const auto recs = trace.at(t);
    if (static_cast<int>(recs.size()) != counts[static_cast<std::size_t>(t)])
      throw std::invalid_argument("trace: slot " + std::to_string(t) + " has " + std::to_string(recs.size()) +
                                  " records but " + std::to_string(counts[static_cast<std::size_t>(t)]) +
                                  " active users");
    acc += regret_increment(recs, process.means_at(t));
    cum[static_cast<std::size_t>(t)] = acc;
  }
  return cum;
}

struct CollisionTally {
  std::array<long, kPhaseCount> by_phase{};
  long total{0};

  long operator[](Phase p) const { return by_phase[static_cast<std::size_t>(p)]; }
  void add(Phase p, long n = 1) {
    by_phase[static_cast<std::size_t>(p)] += n;
    total += n;
  }
};

// Counts collided user-slot records, keyed by the phase each agent reported.
inline CollisionTally collision_count(const RunTrace& trace) {
  CollisionTally tally;
  for (const auto& r : trace.records())
    if (r.collided) tally.add(r.phase);
  return tally;
}

struct BoundParams {
  double N_m{0};
  double K{0};
  double T_O{0};
  double T_Est{0};
  double T_D{0};
  double T_M{0};
  double T_DD{0};
  double T_EP{0};
  double T{0};
  double e{0};
  double l{0};
  double c_log{0};

  static BoundParams from(const E3drParams& p, int initial_users, Slot horizon, int arrivals = 0,
                          int departures = 0, double c_log = 0.0) {
    BoundParams b;
    b.N_m = initial_users;
    b.K = p.K;
    b.T_O = static_cast<double>(p.or_duration());
    b.T_Est = static_cast<double>(p.estimate_duration());
    b.T_D = static_cast<double>(p.detect_duration());
    b.T_M = static_cast<double>(p.T_M);
    b.T_DD = b.T_D * std::ceil(b.K / std::max(1.0, b.N_m));
    b.T_EP = static_cast<double>(p.T_EP);
    b.T = static_cast<double>(horizon);
    b.e = arrivals;
    b.l = departures;
    b.c_log = c_log;
    return b;
  }

  void validate() const {
    for (double v : {N_m, K, T_O, T_Est, T_D, T_M, T_DD, T_EP, T, e, l, c_log})
      if (v < 0) throw std::invalid_argument("bound parameters must be nonnegative");
    if (T_EP <= 0 || T_EP > T) throw std::invalid_argument("bound parameters need 0 < T_EP <= T");
  }

  // Explore-exploit + detect sub-cycles per epoch.
  double sub_cycles() const { return std::ceil((T_EP - T_O - T_Est) / (T_M + T_DD + K)); }

  // Regret of a single epoch.
  double single_epoch_regret() const {
    const double per_user_rounds = std::ceil(K / std::max(1.0, N_m));
    return N_m * (T_O + K - 1) + sub_cycles() * (c_log * std::log(T) + per_user_rounds * (T_D - 1));
  }
};

inline double regret_bound(const BoundParams& p) {
  p.validate();
  const double multiplier = std::max(0.0, 2.0 * p.T / p.T_EP - p.e);
  return p.single_epoch_regret() * multiplier + p.l * (p.T_EP - p.T_Est);
}

inline double collision_bound(const BoundParams& p) {
  p.validate();
  return (p.T / p.T_EP) * (p.N_m * p.T_O + p.c_log * std::log(p.T));
}

}  // namespace e3dr

#pragma once

// Slotted multi-channel medium: K channels with block-wise stationary
// Bernoulli rewards, collisions on simultaneous transmission, passive
// sensing, and a scripted population of arriving and departing users.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "e3dr/rng.hpp"
#include "e3dr/types.hpp"

namespace e3dr {

struct ChannelBlock {
  Slot start{0};
  std::vector<double> means;  // means[k] is the mean reward of channel k
};

struct ChannelProcess {
  int K{0};
  std::vector<ChannelBlock> blocks;

  static ChannelProcess stationary(std::vector<double> means) {
    const int k = static_cast<int>(means.size());
    return {k, {{0, std::move(means)}}};
  }

  void validate() const {
    if (K < 1) throw std::invalid_argument("channel process: K must be positive");
    if (blocks.empty()) throw std::invalid_argument("channel process: at least one block required");
    if (blocks.front().start != 0)
      throw std::invalid_argument("channel process: first block must start at slot 0");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& blk = blocks[b];
      if (b > 0 && blk.start <= blocks[b - 1].start)
        throw std::invalid_argument("channel process: block starts must be strictly increasing");
      if (static_cast<int>(blk.means.size()) != K)
        throw std::invalid_argument("channel process: block " + std::to_string(b) + " has " +
                                    std::to_string(blk.means.size()) + " means, expected " +
                                    std::to_string(K));
      for (double m : blk.means)
        if (!(m >= 0.0 && m <= 1.0))
          throw std::invalid_argument("channel process: means must lie in [0, 1]");
    }
  }

  // 0-based index of the block containing `slot`.
  std::size_t block_of(Slot slot) const {
    auto it = std::upper_bound(blocks.begin(), blocks.end(), slot,
                               [](Slot s, const ChannelBlock& b) { return s < b.start; });
    return static_cast<std::size_t>(std::distance(blocks.begin(), it)) - 1;
  }

  std::span<const double> means_at(Slot slot) const { return blocks[block_of(slot)].means; }
};

struct PopulationEvent {
  enum class Kind : std::uint8_t { Arrival, Departure };
  Slot slot{0};
  Kind kind{Kind::Arrival};
  UserId user{-1};

  friend bool operator==(const PopulationEvent&, const PopulationEvent&) = default;
};

// Initial users carry ids 0..initial_users-1; arrivals take the next fresh id
// in order. Events scheduled at slot s take effect at the end of slot s.
struct PopulationSchedule {
  int initial_users{0};
  std::vector<PopulationEvent> events;

  int total_users() const {
    return initial_users + static_cast<int>(std::count_if(events.begin(), events.end(), [](auto& e) {
             return e.kind == PopulationEvent::Kind::Arrival;
           }));
  }

  UserId add_arrival(Slot slot) {
    const UserId id = total_users();
    events.push_back({slot, PopulationEvent::Kind::Arrival, id});
    return id;
  }

  void add_departure(Slot slot, UserId user) {
    events.push_back({slot, PopulationEvent::Kind::Departure, user});
  }

  int arrivals() const { return total_users() - initial_users; }
  int departures() const { return static_cast<int>(events.size()) - arrivals(); }

  void validate() const {
    if (initial_users < 0) throw std::invalid_argument("population: initial user count is negative");
    std::vector<bool> active(static_cast<std::size_t>(total_users()), false);
    for (int u = 0; u < initial_users; ++u) active[static_cast<std::size_t>(u)] = true;
    UserId next = initial_users;
    Slot prev = 0;
    for (const auto& e : events) {
      if (e.slot < prev) throw std::invalid_argument("population: events must be ordered by slot");
      prev = e.slot;
      if (e.kind == PopulationEvent::Kind::Arrival) {
        if (e.user != next)
          throw std::invalid_argument("population: arrival at slot " + std::to_string(e.slot) +
                                      " must use fresh id " + std::to_string(next));
        active[static_cast<std::size_t>(next++)] = true;
      } else {
        if (e.user < 0 || e.user >= next || !active[static_cast<std::size_t>(e.user)])
          throw std::invalid_argument("population: departure at slot " + std::to_string(e.slot) +
                                      " references inactive user " + std::to_string(e.user));
        active[static_cast<std::size_t>(e.user)] = false;
      }
    }
  }
};

class Environment {
 public:
  Environment(ChannelProcess process, PopulationSchedule schedule, std::uint64_t seed)
      : process_(std::move(process)), schedule_(std::move(schedule)), seed_(seed) {
    process_.validate();
    schedule_.validate();
    for (UserId u = 0; u < schedule_.initial_users; ++u) active_.push_back(u);
    transmitters_.assign(static_cast<std::size_t>(process_.K), 0);
  }

  int channels() const { return process_.K; }
  Slot slot() const { return slot_; }
  const ChannelProcess& process() const { return process_; }
  const PopulationSchedule& schedule() const { return schedule_; }

  // Sorted ids of users present in the network for the current slot.
  const std::vector<UserId>& active_users() const { return active_; }
  bool is_active(UserId u) const { return std::binary_search(active_.begin(), active_.end(), u); }

  // Population changes applied at the end of the most recent step.
  const std::vector<UserId>& last_arrivals() const { return arrived_; }
  const std::vector<UserId>& last_departures() const { return departed_; }

  std::size_t block_of(Slot slot) const { return process_.block_of(slot); }

  // The Bernoulli draw for (slot, channel). A pure function of the seed, so
  // every algorithm run under the same seed faces the same reward realizations.
  double reward_draw(Slot slot, Channel k) const {
    const double mu = process_.means_at(slot)[static_cast<std::size_t>(k)];
    const double u = to_unit(mix64(seed_, stream::kRewards,
                                   static_cast<std::uint64_t>(slot) * 1315423911ULL +
                                       static_cast<std::uint64_t>(k)));
    return u < mu ? 1.0 : 0.0;
  }

  // Resolves one slot. Active users without an entry are treated as Idle.
  std::map<UserId, Observation> step(const std::map<UserId, Action>& actions) {
    std::fill(transmitters_.begin(), transmitters_.end(), 0);
    for (const auto& [user, action] : actions) {
      if (!is_active(user))
        throw std::invalid_argument("step: user " + std::to_string(user) + " is not active");
      if (action.kind != ActionKind::Idle && (action.channel < 0 || action.channel >= process_.K))
        throw std::out_of_range("step: channel " + std::to_string(action.channel) +
                                " outside [0, " + std::to_string(process_.K) + ")");
      if (action.kind == ActionKind::Transmit) ++transmitters_[static_cast<std::size_t>(action.channel)];
    }

    std::map<UserId, Observation> out;
    for (const auto& [user, action] : actions) {
      Observation obs{action.kind};
      const auto n = action.kind == ActionKind::Idle ? 0 : transmitters_[static_cast<std::size_t>(action.channel)];
      if (action.kind == ActionKind::Transmit) {
        obs.collided = n > 1;
        obs.reward = obs.collided ? 0.0 : reward_draw(slot_, action.channel);
      } else if (action.kind == ActionKind::Sense) {
        obs.busy = n > 0;
      }
      out.emplace(user, obs);
    }

    apply_population_events();
    ++slot_;
    return out;
  }

 private:
  void apply_population_events() {
    arrived_.clear();
    departed_.clear();
    const auto& ev = schedule_.events;
    while (next_event_ < ev.size() && ev[next_event_].slot <= slot_) {
      const auto& e = ev[next_event_++];
      if (e.kind == PopulationEvent::Kind::Arrival) {
        active_.insert(std::upper_bound(active_.begin(), active_.end(), e.user), e.user);
        arrived_.push_back(e.user);
      } else {
        active_.erase(std::lower_bound(active_.begin(), active_.end(), e.user));
        departed_.push_back(e.user);
      }
    }
  }

  ChannelProcess process_;
  PopulationSchedule schedule_;
  std::uint64_t seed_;
  Slot slot_{0};
  std::size_t next_event_{0};
  std::vector<UserId> active_;
  std::vector<UserId> arrived_;
  std::vector<UserId> departed_;
  std::vector<int> transmitters_;
};

}  // namespace e3dr

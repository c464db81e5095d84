#pragma once

// UCB indices plus the musical-chairs-on-top-M arm selection rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "e3dr/rng.hpp"
#include "e3dr/types.hpp"

namespace e3dr {

struct ArmStats {
  long pulls{0};
  double reward_sum{0.0};
  long collisions{0};  // pulls that ended in a collision (reward forced to 0)

  std::optional<double> mean() const {
    if (pulls == 0) return std::nullopt;
    return reward_sum / static_cast<double>(pulls);
  }

  long clean_pulls() const { return pulls - collisions; }

  // Mean over collision-free pulls only: an estimate of the channel itself
  // rather than of the throughput this user obtained on it.
  std::optional<double> clean_mean() const {
    if (clean_pulls() == 0) return std::nullopt;
    return reward_sum / static_cast<double>(clean_pulls());
  }
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// g_k(t) = mean_k + sqrt(ln t / (2 T_k)); unpulled arms rank first.
inline double ucb_index(const ArmStats& s, double t) {
  if (s.pulls == 0) return kInf;
  const double n = static_cast<double>(s.pulls);
  return s.reward_sum / n + std::sqrt(std::log(std::max(t, 1.0)) / (2.0 * n));
}

// The n channels with the largest indices, ties to the smaller channel,
// returned in ascending channel order.
inline std::vector<Channel> top_set(std::span<const double> indices, int n) {
  std::vector<Channel> order(indices.size());
  std::iota(order.begin(), order.end(), 0);
  const auto m = static_cast<std::size_t>(std::clamp(n, 0, static_cast<int>(indices.size())));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                    [&](Channel a, Channel b) {
                      const auto ia = indices[static_cast<std::size_t>(a)];
                      const auto ib = indices[static_cast<std::size_t>(b)];
                      return ia > ib || (ia == ib && a < b);
                    });
  order.resize(m);
  std::sort(order.begin(), order.end());
  return order;
}

struct McTopMState {
  std::vector<ArmStats> arms;
  Channel current_arm{0};
  bool fixed{false};
  long t_policy{0};
  std::vector<double> prev_indices;

  McTopMState() = default;
  McTopMState(int K, Channel initial_arm)
      : arms(static_cast<std::size_t>(K)),
        current_arm(initial_arm),
        prev_indices(static_cast<std::size_t>(K), kInf) {}

  int channels() const { return static_cast<int>(arms.size()); }

  std::vector<double> indices() const {
    std::vector<double> g(arms.size());
    for (std::size_t k = 0; k < arms.size(); ++k) g[k] = ucb_index(arms[k], static_cast<double>(t_policy));
    return g;
  }
};

inline void mctopm_update(McTopMState& s, Channel arm, const Observation& obs) {
  auto& a = s.arms[static_cast<std::size_t>(arm)];
  ++s.t_policy;
  ++a.pulls;
  if (obs.collided) {
    ++a.collisions;
  } else {
    a.reward_sum += obs.reward;
  }
}

// Chooses the next arm given the observation from the arm just played.
inline Channel mctopm_step(McTopMState& s, int n_users, const Observation& last_obs, Rng& rng) {
  const auto g = s.indices();
  const auto top = top_set(g, n_users);
  const auto cur = static_cast<std::size_t>(s.current_arm);
  const bool in_top = std::binary_search(top.begin(), top.end(), s.current_arm);

  if (!in_top) {
    std::vector<Channel> candidates;
    for (Channel k : top)
      if (s.prev_indices[static_cast<std::size_t>(k)] <= s.prev_indices[cur]) candidates.push_back(k);
    const auto& pool = candidates.empty() ? top : candidates;
    s.current_arm = pool[static_cast<std::size_t>(uniform_index(rng, static_cast<int>(pool.size())))];
    s.fixed = false;
  } else if (last_obs.collided && !s.fixed) {
    s.current_arm = top[static_cast<std::size_t>(uniform_index(rng, static_cast<int>(top.size())))];
  } else {
    s.fixed = true;
  }
  s.prev_indices = g;
  return s.current_arm;
}

inline void reset(McTopMState& s) {
  std::fill(s.arms.begin(), s.arms.end(), ArmStats{});
  std::fill(s.prev_indices.begin(), s.prev_indices.end(), kInf);
  s.t_policy = 0;
  s.fixed = false;
}

}  // namespace e3dr

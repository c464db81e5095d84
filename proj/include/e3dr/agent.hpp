#pragma once

// Per-user E3DR state machine. Each epoch runs
//   OR (T_O) -> Estimate (T_Est) -> { ExploreExploit (T_M) -> Detect }*
// with the last sub-cycle truncated at the epoch boundary. Users never talk
// to each other; everything they learn comes from their own observations.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "e3dr/mctopm.hpp"
#include "e3dr/rng.hpp"
#include "e3dr/types.hpp"

namespace e3dr {

constexpr int ceil_div(int a, int b) { return (a + b - 1) / b; }

/// Slots needed for N <= K users hopping uniformly at random to all lock on
/// distinct channels with probability at least 1 - delta.
inline Slot compute_or_duration(int K, double delta) {
  const double k = static_cast<double>(K);
  return static_cast<Slot>(std::ceil(std::log(delta / k) / std::log(1.0 - 1.0 / (4.0 * k))));
}

/// Collision-free samples per channel for an epsilon-correct change test
/// with probability at least 1 - delta (Hoeffding).
inline Slot compute_detect_duration(double epsilon, double delta) {
  return static_cast<Slot>(std::ceil(2.0 / (epsilon * epsilon) * std::log(2.0 / delta)));
}

/// Channel measured by the user of rank `rank` in detect sub-round `v` (both
/// 0-based), or nullopt when the arithmetic progression runs past K.
constexpr std::optional<Channel> detect_assignment(int rank, int v, int K, int n_users) {
  const int a = rank * ceil_div(K, n_users) + v;
  if (a >= K) return std::nullopt;
  return a;
}

struct E3drParams {
  int K{10};
  double delta{0.1};
  double epsilon{0.1};
  double psi{0.1};
  Slot T_M{2000};
  Slot T_EP{12000};
  bool sensing_capable{true};

  Slot or_duration() const { return compute_or_duration(K, delta); }
  Slot detect_duration() const { return compute_detect_duration(epsilon, delta); }
  Slot estimate_duration() const {
    return sensing_capable ? K : static_cast<Slot>(K) * K;
  }
  // Worst case (a single user measures every channel).
  Slot min_epoch_length() const {
    return or_duration() + estimate_duration() + T_M + static_cast<Slot>(K) * (detect_duration() + 1);
  }

  void validate() const {
    if (K < 1) throw std::invalid_argument("K must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
    if (!(psi > 0.05)) throw std::invalid_argument("psi must exceed 0.05 to avoid frequent resets");
    if (T_M < 1) throw std::invalid_argument("T_M must be positive");
    if (T_EP < min_epoch_length())
      throw std::invalid_argument("T_EP must be at least " + std::to_string(min_epoch_length()) +
                                  " (OR + Estimate + T_M + one full detect phase)");
  }
};

/// Where an epoch offset falls once the user count estimate is known.
struct EpochLayout {
  Slot T_O{0}, T_Est{0}, T_M{0}, T_D{0}, T_EP{0};
  int K{0};
  int n_hat{1};

  static EpochLayout from(const E3drParams& p, int n_hat) {
    return {p.or_duration(), p.estimate_duration(), p.T_M, p.detect_duration(), p.T_EP, p.K, n_hat};
  }

  int rounds() const { return ceil_div(K, n_hat); }
  Slot round_length() const { return T_D + n_hat; }
  Slot detect_length() const { return rounds() * round_length(); }
  Slot cycle_length() const { return T_M + detect_length(); }
  Slot cycles_start() const { return T_O + T_Est; }

  struct Position {
    Phase phase{Phase::Or};
    Slot in_phase{0};  // slots since this phase started
    int sub_round{0};  // Detect only
    Slot in_round{0};  // Detect only; < T_D is measurement, else signaling
  };

  Position locate(Slot offset) const {
    if (offset < T_O) return {Phase::Or, offset};
    if (offset < cycles_start()) return {Phase::Estimate, offset - T_O};
    const Slot p = (offset - cycles_start()) % cycle_length();
    if (p < T_M) return {Phase::ExploreExploit, p};
    const Slot q = p - T_M;
    return {Phase::Detect, q, static_cast<int>(q / round_length()), q % round_length()};
  }
};

class Orthogonalizer {
 public:
  Action next(int K, Rng& rng) {
    if (!locked_) last_ = uniform_index(rng, K);
    return Action::transmit(locked_.value_or(last_));
  }
  void observe(const Observation& obs) {
    if (!locked_ && !obs.collided) locked_ = last_;
  }
  std::optional<Channel> locked() const { return locked_; }

 private:
  std::optional<Channel> locked_;
  Channel last_{0};
};

/// Sensing variant: one slot per channel; transmit on the own channel, sense
/// every other one and count the busy ones.
class SensingEstimator {
 public:
  SensingEstimator(int K, Channel own) : own_(own), occupied_(static_cast<std::size_t>(K), false) {
    occupied_[static_cast<std::size_t>(own)] = true;
  }
  static Slot duration(int K) { return K; }

  Action next(Slot step) const {
    const auto ch = static_cast<Channel>(step);
    return ch == own_ ? Action::transmit(own_) : Action::sense(ch);
  }
  void observe(Slot step, const Observation& obs) {
    if (obs.kind == ActionKind::Sense && obs.busy) occupied_[static_cast<std::size_t>(step)] = true;
  }
  const std::vector<bool>& occupied() const { return occupied_; }

 private:
  Channel own_;
  std::vector<bool> occupied_;
};

/// No-sensing variant: K frames of K slots. Outside its own frame a user
/// holds its channel; inside it, the user walks every channel and counts
/// collisions.
class CollisionEstimator {
 public:
  CollisionEstimator(int K, Channel own) : K_(K), own_(own), occupied_(static_cast<std::size_t>(K), false) {
    occupied_[static_cast<std::size_t>(own)] = true;
  }
  static Slot duration(int K) { return static_cast<Slot>(K) * K; }

  Action next(Slot step) const {
    const auto frame = static_cast<Channel>(step / K_);
    if (frame != own_) return Action::transmit(own_);
    return Action::transmit(static_cast<Channel>(step % K_));
  }
  void observe(Slot step, const Observation& obs) {
    const auto frame = static_cast<Channel>(step / K_);
    const auto ch = static_cast<Channel>(step % K_);
    if (frame == own_ && ch != own_ && obs.collided) occupied_[static_cast<std::size_t>(ch)] = true;
  }
  const std::vector<bool>& occupied() const { return occupied_; }

 private:
  int K_;
  Channel own_;
  std::vector<bool> occupied_;
};

// Estimated user count and 0-based rank of `own` among occupied channels.
inline int count_users(const std::vector<bool>& occupied) {
  int n = 0;
  for (bool b : occupied) n += b ? 1 : 0;
  return n;
}

inline int rank_of(const std::vector<bool>& occupied, Channel own) {
  int r = 0;
  for (Channel k = 0; k < own; ++k) r += occupied[static_cast<std::size_t>(k)] ? 1 : 0;
  return r;
}

/// True when the change test fires for channel `a`. Channels without a
/// trustworthy learned mean are never flagged.
inline bool change_detected(std::optional<double> learned, double measured, double psi) {
  return learned && std::abs(measured - *learned) >= psi;
}

class E3drAgent {
 public:
  E3drAgent(const E3drParams& params, std::uint64_t seed)
      : p_(params), layout_(EpochLayout::from(params, 1)), rng_(seed) {
    x_.assign(static_cast<std::size_t>(p_.K), 0.0);
    y_.assign(static_cast<std::size_t>(p_.K), 0);
    mu_tilde_.assign(static_cast<std::size_t>(p_.K), std::nullopt);
    learned_.assign(static_cast<std::size_t>(p_.K), std::nullopt);
  }

  Action decide(Slot t) {
    const Slot off = t % p_.T_EP;
    if (off == 0) begin_epoch();
    pending_ = Pending::None;
    round_closed_ = false;
    if (phase_ == Phase::Waiting || phase_ == Phase::BackedOff) return Action::idle();

    if (off < layout_.T_O) {
      phase_ = Phase::Or;
      pending_ = Pending::Or;
      return orth_.next(p_.K, rng_);
    }
    if (off == layout_.T_O) {
      if (!orth_.locked()) {
        phase_ = Phase::BackedOff;
        return Action::idle();
      }
      locked_ = *orth_.locked();
      if (p_.sensing_capable)
        estimator_ = SensingEstimator(p_.K, locked_);
      else
        estimator_ = CollisionEstimator(p_.K, locked_);
    }
    if (off < layout_.cycles_start()) {
      phase_ = Phase::Estimate;
      est_step_ = off - layout_.T_O;
      pending_ = Pending::Estimate;
      return std::visit([&](auto& e) { return e.next(est_step_); }, estimator_);
    }
    if (off == layout_.cycles_start()) {
      const auto& occ = std::visit([](auto& e) -> const std::vector<bool>& { return e.occupied(); }, estimator_);
      n_hat_ = count_users(occ);
      rank_ = rank_of(occ, locked_);
      layout_ = EpochLayout::from(p_, n_hat_);
    }

    const auto pos = layout_.locate(off);
    if (pos.phase == Phase::ExploreExploit) {
      if (pos.in_phase == 0) begin_explore(t);
      phase_ = Phase::ExploreExploit;
      pending_ = Pending::Explore;
      return Action::transmit(policy_.current_arm);
    }
    return detect_decide(pos);
  }

  Action decide(const SlotContext& ctx) { return decide(ctx.slot); }

  void observe(const Observation& obs) {
    switch (pending_) {
      case Pending::None: break;
      case Pending::Or: orth_.observe(obs); break;
      case Pending::Estimate:
        std::visit([&](auto& e) { e.observe(est_step_, obs); }, estimator_);
        break;
      case Pending::Explore:
        mctopm_update(policy_, policy_.current_arm, obs);
        mctopm_step(policy_, n_hat_, obs, rng_);
        break;
      case Pending::Measure: {
        const auto a = static_cast<std::size_t>(*assigned_);
        if (obs.collided) {
          ++anomalies_;
        } else {
          x_[a] += obs.reward;
          ++y_[a];
          mctopm_update(policy_, *assigned_, obs);
        }
        break;
      }
      case Pending::Signal:
        if (obs.busy) d_flag_ = true;
        break;
    }
  }

  Phase phase() const { return phase_; }
  std::optional<Channel> locked_channel() const {
    if (phase_ == Phase::Waiting || phase_ == Phase::BackedOff || phase_ == Phase::Or) return std::nullopt;
    return locked_;
  }
  int n_hat() const { return n_hat_; }
  int rank() const { return rank_; }  // 0-based
  bool d_flag() const { return d_flag_; }
  const McTopMState& policy() const { return policy_; }
  const std::vector<std::optional<double>>& learned_means() const { return learned_; }
  const std::vector<std::optional<double>>& measured_means() const { return mu_tilde_; }
  const std::vector<Slot>& resets() const { return resets_; }
  long anomalies() const { return anomalies_; }
  const E3drParams& params() const { return p_; }
  const EpochLayout& layout() const { return layout_; }

  // True right after the slot that closed a signaling sub-round.
  bool signaling_round_closed() const { return round_closed_; }

 private:
  enum class Pending : std::uint8_t { None, Or, Estimate, Explore, Measure, Signal };

  void begin_epoch() {
    phase_ = Phase::Or;
    orth_ = Orthogonalizer{};
    n_hat_ = 0;
    rank_ = -1;
  }

  void begin_explore(Slot t) {
    if (!policy_started_) {
      policy_ = McTopMState(p_.K, locked_);
      policy_started_ = true;
    }
    if (d_flag_) {
      reset(policy_);
      d_flag_ = false;
      resets_.push_back(t);
    }
  }

  Action detect_decide(const EpochLayout::Position& pos) {
    phase_ = Phase::Detect;
    const auto T_D = layout_.T_D;
    const int R = layout_.rounds();
    if (pos.in_phase == 0) {
      for (std::size_t k = 0; k < learned_.size(); ++k) {
        const auto& arm = policy_.arms[k];
        learned_[k] = arm.clean_pulls() >= T_D ? arm.clean_mean() : std::nullopt;
      }
    }
    if (pos.in_round == 0) {
      assigned_ = detect_assignment(rank_, pos.sub_round, p_.K, n_hat_);
      if (assigned_) {
        x_[static_cast<std::size_t>(*assigned_)] = 0.0;
        y_[static_cast<std::size_t>(*assigned_)] = 0;
      }
    }
    if (pos.in_round < T_D) {
      if (!assigned_) return Action::idle();
      pending_ = Pending::Measure;
      return Action::transmit(*assigned_);
    }
    if (pos.in_round == T_D) {
      signal_ = false;
      if (assigned_) {
        const auto a = static_cast<std::size_t>(*assigned_);
        if (y_[a] > 0) {
          mu_tilde_[a] = x_[a] / static_cast<double>(y_[a]);
          signal_ = change_detected(learned_[a], *mu_tilde_[a], p_.psi);
        }
      }
    }
    const int s = static_cast<int>(pos.in_round - T_D);
    if (s == n_hat_ - 1) round_closed_ = true;
    if (s == rank_) {
      if (!signal_) return Action::idle();
      d_flag_ = true;
      return Action::transmit(*assigned_);
    }
    const int ch = s * R + pos.sub_round;
    if (ch >= p_.K) return Action::idle();
    pending_ = Pending::Signal;
    return Action::sense(ch);
  }

  E3drParams p_;
  EpochLayout layout_;
  Rng rng_;
  Phase phase_{Phase::Waiting};
  Pending pending_{Pending::None};

  Orthogonalizer orth_;
  Channel locked_{0};
  std::variant<SensingEstimator, CollisionEstimator> estimator_{SensingEstimator(1, 0)};
  Slot est_step_{0};
  int n_hat_{0};
  int rank_{-1};

  McTopMState policy_;
  bool policy_started_{false};

  std::optional<Channel> assigned_;
  std::vector<double> x_;
  std::vector<long> y_;
  std::vector<std::optional<double>> mu_tilde_;
  std::vector<std::optional<double>> learned_;
  bool signal_{false};
  bool d_flag_{false};
  bool round_closed_{false};

  std::vector<Slot> resets_;
  long anomalies_{0};
};

}  // namespace e3dr

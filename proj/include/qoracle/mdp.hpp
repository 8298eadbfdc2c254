#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qoracle/errors.hpp"
#include "qoracle/table.hpp"

namespace qoracle {

/// Every random draw in the library goes through an explicitly passed engine.
using Rng = std::mt19937_64;

struct Successor {
  std::size_t next;
  double prob;
};

/// Finite discounted MDP with a sparse kernel.
///
/// Successor lists are stored per (s, a) in one flat array with offsets.
/// Terminal states are absorbing: every action self-loops with probability
/// one and reward zero, so infinite-horizon formulas apply unchanged.
/// Immutable after construction.
class TabularMdp {
 public:
  TabularMdp() = default;

  /// `kernel[s * n_actions + a]` lists the successors of (s, a).
  TabularMdp(std::size_t n_states, std::size_t n_actions, double discount,
             const std::vector<std::vector<Successor>>& kernel, Table rewards,
             std::vector<double> initial_dist, std::vector<bool> terminal_mask = {})
      : n_states_(n_states),
        n_actions_(n_actions),
        discount_(discount),
        rewards_(std::move(rewards)),
        initial_dist_(std::move(initial_dist)),
        terminal_(std::move(terminal_mask)) {
    if (n_states_ == 0 || n_actions_ == 0) throw ValidationError("mdp needs at least one state and one action");
    if (!(discount_ > 0.0 && discount_ < 1.0)) throw ValidationError("discount must lie strictly inside (0,1)");
    if (kernel.size() != n_states_ * n_actions_) throw DimensionError("kernel must have one entry per (s,a)");
    if (rewards_.rows() != n_states_ || rewards_.cols() != n_actions_) throw DimensionError("reward table shape");
    if (initial_dist_.size() != n_states_) throw DimensionError("initial distribution length");
    if (terminal_.empty()) terminal_.assign(n_states_, false);
    if (terminal_.size() != n_states_) throw DimensionError("terminal mask length");

    offsets_.reserve(kernel.size() + 1);
    offsets_.push_back(0);
    for (std::size_t i = 0; i < kernel.size(); ++i) {
      double total = 0.0;
      for (const Successor& succ : kernel[i]) {
        if (succ.next >= n_states_) throw IndexError("successor state out of range");
        if (!(succ.prob >= 0.0)) throw ValidationError("negative transition probability");
        total += succ.prob;
        entries_.push_back(succ);
      }
      if (std::abs(total - 1.0) > 1e-9)
        throw ValidationError("transition row " + std::to_string(i) + " sums to " + std::to_string(total));
      offsets_.push_back(entries_.size());
    }
    if (!rewards_.all_finite()) throw ValidationError("rewards must be finite");

    double mass = 0.0;
    for (double p : initial_dist_) {
      if (!(p >= 0.0)) throw ValidationError("negative initial probability");
      mass += p;
    }
    if (std::abs(mass - 1.0) > 1e-9) throw ValidationError("initial distribution sums to " + std::to_string(mass));

    for (std::size_t s = 0; s < n_states_; ++s) {
      if (!terminal_[s]) continue;
      for (std::size_t a = 0; a < n_actions_; ++a) {
        auto succ = successors(s, a);
        double self = 0.0;
        for (const Successor& x : succ)
          if (x.next == s) self += x.prob;
        if (std::abs(self - 1.0) > 1e-9 || rewards_(s, a) != 0.0)
          throw ValidationError("terminal state " + std::to_string(s) + " is not absorbing with zero reward");
      }
    }
  }

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  double discount() const { return discount_; }

  std::span<const Successor> successors(std::size_t s, std::size_t a) const {
    const std::size_t i = s * n_actions_ + a;
    return {entries_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  double reward(std::size_t s, std::size_t a) const { return rewards_(s, a); }
  const Table& rewards() const { return rewards_; }
  const std::vector<double>& initial_dist() const { return initial_dist_; }
  bool is_terminal(std::size_t s) const { return terminal_[s]; }
  const std::vector<bool>& terminal_mask() const { return terminal_; }

  double max_abs_reward() const { return sup_norm(rewards_); }

  void check_state(std::size_t s) const {
    if (s >= n_states_) throw IndexError("state " + std::to_string(s) + " out of range");
  }
  void check_action(std::size_t a) const {
    if (a >= n_actions_) throw IndexError("action " + std::to_string(a) + " out of range");
  }

  template <class T>
  void check_shape(const T& table, const char* what) const {
    if (table.rows() != n_states_ || table.cols() != n_actions_)
      throw DimensionError(std::string(what) + ": table shape does not match the mdp");
  }

  friend bool operator==(const TabularMdp& x, const TabularMdp& y) {
    auto same_entries = x.entries_.size() == y.entries_.size();
    for (std::size_t i = 0; same_entries && i < x.entries_.size(); ++i)
      same_entries = x.entries_[i].next == y.entries_[i].next && x.entries_[i].prob == y.entries_[i].prob;
    return same_entries && x.n_states_ == y.n_states_ && x.n_actions_ == y.n_actions_ &&
           x.discount_ == y.discount_ && x.offsets_ == y.offsets_ && x.rewards_ == y.rewards_ &&
           x.initial_dist_ == y.initial_dist_ && x.terminal_ == y.terminal_;
  }

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  double discount_ = 0.9;
  std::vector<std::size_t> offsets_;
  std::vector<Successor> entries_;
  Table rewards_;
  std::vector<double> initial_dist_;
  std::vector<bool> terminal_;
};

/// <f1, f2>(s) = sum_a f1(s,a) f2(s,a)
inline VTable dot(const Table& f1, const Table& f2) {
  if (!f1.same_shape(f2)) throw DimensionError("dot: shape mismatch");
  VTable out(f1.rows(), 0.0);
  for (std::size_t s = 0; s < f1.rows(); ++s) {
    auto x = f1.row(s);
    auto y = f2.row(s);
    double acc = 0.0;
    for (std::size_t a = 0; a < x.size(); ++a) acc += x[a] * y[a];
    out[s] = acc;
  }
  return out;
}

/// (P v)(s,a) = sum_{s'} P(s'|s,a) v(s')
inline QTable apply_p(const TabularMdp& mdp, std::span<const double> v) {
  if (v.size() != mdp.n_states()) throw DimensionError("apply_p: vector length does not match n_states");
  QTable out(mdp.n_states(), mdp.n_actions());
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      double acc = 0.0;
      for (const Successor& x : mdp.successors(s, a)) acc += x.prob * v[x.next];
      out(s, a) = acc;
    }
  return out;
}

/// r + gamma * P v, written in place over the result of apply_p.
inline QTable backup_from_values(const TabularMdp& mdp, std::span<const double> v) {
  QTable out = apply_p(mdp, v);
  const double gamma = mdp.discount();
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) out(s, a) = mdp.reward(s, a) + gamma * out(s, a);
  return out;
}

/// T q = r + gamma * P max_a q
inline QTable bellman_optimal_backup(const TabularMdp& mdp, const QTable& q) {
  mdp.check_shape(q, "bellman_optimal_backup");
  return backup_from_values(mdp, rowwise_max(q));
}

/// T_pi q = r + gamma * P <pi, q>
inline QTable bellman_expected_backup(const TabularMdp& mdp, const QTable& q, const Policy& pi) {
  mdp.check_shape(q, "bellman_expected_backup");
  mdp.check_shape(pi, "bellman_expected_backup");
  return backup_from_values(mdp, dot(pi, q));
}

/// Index drawn from a discrete distribution given as (index, weight) pairs.
inline std::size_t sample_successor(std::span<const Successor> succ, Rng& rng) {
  if (succ.size() == 1) return succ[0].next;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  for (const Successor& x : succ) {
    cum += x.prob;
    if (u < cum) return x.next;
  }
  return succ.back().next;
}

inline std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  // rounding left u above the last partial sum: take the last nonzero entry
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  return probs.size() - 1;
}

struct StepResult {
  std::size_t next_state;
  double reward;
  bool done;
};

inline StepResult step(const TabularMdp& mdp, Rng& rng, std::size_t s, std::size_t a) {
  mdp.check_state(s);
  mdp.check_action(a);
  const std::size_t next = sample_successor(mdp.successors(s, a), rng);
  return {next, mdp.reward(s, a), mdp.is_terminal(next)};
}

}  // namespace qoracle

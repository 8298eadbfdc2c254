#pragma once

// Exact evaluation of policies on a TabularMdp by exhaustive enumeration
// of state-action pairs: Q_pi (optionally regularized), Q_*, discounted
// visitation d_pi, undiscounted returns, replay-buffer counts and the
// sup-norm optimality gap.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qoracle/errors.hpp"
#include "qoracle/mdp.hpp"
#include "qoracle/replay_buffer.hpp"
#include "qoracle/table.hpp"

namespace qoracle {

/// Probabilities below this are floored before taking logs.
inline constexpr double kLogFloor = 1e-12;

inline double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

/// KL (tau) and entropy (lambda) coefficients plus the policy KL is measured against.
struct RegularizationSpec {
  double kl_coef = 0.0;
  double er_coef = 0.0;
  std::optional<Policy> base_policy;

  bool active() const { return kl_coef > 0.0 || er_coef > 0.0; }

  void validate() const {
    if (!(kl_coef >= 0.0) || !(er_coef >= 0.0)) throw ValidationError("regularization coefficients must be >= 0");
    if (kl_coef > 0.0 && !base_policy) throw ValidationError("kl_coef > 0 needs a base policy");
  }
};

/// Per-state expected regularization bonus
///   b(s) = sum_a pi(a|s) * ( -tau * log(pi/base) - lambda * log pi ).
inline VTable regularization_bonus(const Policy& pi, const RegularizationSpec& reg) {
  VTable bonus(pi.rows(), 0.0);
  if (!reg.active()) return bonus;
  for (std::size_t s = 0; s < pi.rows(); ++s) {
    double acc = 0.0;
    for (std::size_t a = 0; a < pi.cols(); ++a) {
      const double p = pi(s, a);
      if (p == 0.0) continue;
      const double logp = safe_log(p);
      double term = 0.0;
      if (reg.kl_coef > 0.0) term -= reg.kl_coef * (logp - safe_log((*reg.base_policy)(s, a)));
      if (reg.er_coef > 0.0) term -= reg.er_coef * logp;
      acc += p * term;
    }
    bonus[s] = acc;
  }
  return bonus;
}

/// Iterations after which gamma^k * max|r| / (1 - gamma) <= tol.
inline std::size_t contraction_horizon(double gamma, double max_abs_reward, double tol) {
  if (max_abs_reward <= 0.0) return 1;
  const double k = std::log(tol * (1.0 - gamma) / max_abs_reward) / std::log(gamma);
  return static_cast<std::size_t>(std::max(1.0, std::ceil(k)));
}

inline std::size_t default_optimal_horizon(const TabularMdp& mdp, double tol = 1e-6) {
  return contraction_horizon(mdp.discount(), mdp.max_abs_reward(), tol);
}

/// Smallest horizon whose truncated visitation tail gamma^(h+1) is below tol.
inline std::size_t default_visit_horizon(double gamma, double tol = 1e-6) {
  return static_cast<std::size_t>(std::max(1.0, std::ceil(std::log(tol) / std::log(gamma))));
}

struct EvaluationOptions {
  double tol = 1e-10;  // bound on the sup-norm distance to the fixed point
  std::size_t max_iterations = 200000;
};

/// Fixed point of Q <- r + gamma P <pi, Q - tau log(pi/base) - lambda log pi>.
/// With zero regularization this is Q_pi. Stops once gamma/(1-gamma) times the last
/// change is below opts.tol; throws ConvergenceError on hitting the cap.
inline QTable calc_q(const TabularMdp& mdp, const Policy& pi, const RegularizationSpec& reg = {},
                     const EvaluationOptions& opts = {}) {
  mdp.check_shape(pi, "calc_q");
  pi.validate();
  reg.validate();
  if (reg.base_policy) mdp.check_shape(*reg.base_policy, "calc_q base policy");

  const VTable bonus = regularization_bonus(pi, reg);
  const double gamma = mdp.discount();
  const double stop = opts.tol * (1.0 - gamma) / gamma;
  QTable q(mdp.n_states(), mdp.n_actions());
  VTable v(mdp.n_states());
  double residual = 0.0;
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    const VTable pq = dot(pi, q);
    for (std::size_t s = 0; s < v.size(); ++s) v[s] = pq[s] + bonus[s];
    QTable next = backup_from_values(mdp, v);
    residual = sup_norm_diff(next, q);
    q = std::move(next);
    if (residual <= stop) return q;
  }
  throw ConvergenceError("calc_q did not converge, residual " + std::to_string(residual), residual);
}

/// `horizon` optimal backups starting from Q = 0.
inline QTable calc_optimal_q(const TabularMdp& mdp, std::size_t horizon) {
  if (horizon == 0) throw ValidationError("calc_optimal_q: horizon must be >= 1");
  QTable q(mdp.n_states(), mdp.n_actions());
  for (std::size_t k = 0; k < horizon; ++k) q = bellman_optimal_backup(mdp, q);
  return q;
}

inline QTable calc_optimal_q(const TabularMdp& mdp) { return calc_optimal_q(mdp, default_optimal_horizon(mdp)); }

/// One step of the state-marginal chain: mu'(s') = sum_{s,a} mu(s) pi(a|s) P(s'|s,a).
inline void propagate(const TabularMdp& mdp, const Policy& pi, std::span<const double> mu, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    if (mu[s] == 0.0) continue;
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double w = mu[s] * pi(s, a);
      if (w == 0.0) continue;
      for (const Successor& x : mdp.successors(s, a)) out[x.next] += w * x.prob;
    }
  }
}

/// d_pi(s) = (1 - gamma) sum_{t=0}^{horizon} gamma^t P(S_t = s | pi), lifted by pi(a|s).
inline VisitTable calc_visit(const TabularMdp& mdp, const Policy& pi, std::size_t horizon) {
  mdp.check_shape(pi, "calc_visit");
  pi.validate();
  const double gamma = mdp.discount();
  std::vector<double> mu = mdp.initial_dist();
  std::vector<double> next(mu.size());
  std::vector<double> d(mu.size(), 0.0);
  double weight = 1.0 - gamma;
  for (std::size_t t = 0; t <= horizon; ++t) {
    for (std::size_t s = 0; s < d.size(); ++s) d[s] += weight * mu[s];
    if (t == horizon) break;
    propagate(mdp, pi, mu, next);
    mu.swap(next);
    weight *= gamma;
  }
  Table sa(mdp.n_states(), mdp.n_actions());
  for (std::size_t s = 0; s < d.size(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) sa(s, a) = d[s] * pi(s, a);
  return {std::move(d), std::move(sa)};
}

inline VisitTable calc_visit(const TabularMdp& mdp, const Policy& pi) {
  return calc_visit(mdp, pi, default_visit_horizon(mdp.discount()));
}

/// E_pi[ sum_{t<horizon} r(S_t, A_t) ] by exact distribution propagation.
inline double calc_return(const TabularMdp& mdp, const Policy& pi, std::size_t horizon) {
  mdp.check_shape(pi, "calc_return");
  pi.validate();
  const VTable r_pi = dot(pi, mdp.rewards());
  std::vector<double> mu = mdp.initial_dist();
  std::vector<double> next(mu.size());
  double total = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t s = 0; s < mu.size(); ++s) total += mu[s] * r_pi[s];
    if (t + 1 == horizon) break;
    propagate(mdp, pi, mu, next);
    mu.swap(next);
  }
  return total;
}

/// Raw occurrence counts of (s, a) among the transitions stored in a buffer.
inline VisitTable count_visit(const ReplayBuffer& buffer, const TabularMdp& mdp) {
  if (buffer.empty()) throw EmptyInputError("count_visit: empty buffer");
  Table counts(mdp.n_states(), mdp.n_actions());
  std::vector<double> states(mdp.n_states(), 0.0);
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const Transition& t = buffer[i];
    mdp.check_state(t.state);
    mdp.check_action(t.action);
    counts(t.state, t.action) += 1.0;
    states[t.state] += 1.0;
  }
  return {std::move(states), std::move(counts)};
}

/// || q_star - q ||_inf
inline double optimality_gap(const Table& q_star, const Table& q) {
  if (!q_star.same_shape(q)) throw DimensionError("optimality_gap: shape mismatch");
  return sup_norm_diff(q_star, q);
}

}  // namespace qoracle

#pragma once

// One iterate skeleton whose behavior is assembled from configuration axes:
//
//   family   vi | pi
//   approx   tabular | nn
//   explore  none (dynamic programming on the full model) | eps_greedy | softmax
//   kl_coef (tau), er_coef (lambda), noise_sigma, double_q, munchausen_alpha
//
// VI family:  tau = lambda = 0 is VI; tau > 0 KL-VI; lambda > 0 entropy-VI;
//             both CVI. With exploration it becomes tabular Q-learning or,
//             with approx = nn, DQL / double DQL / M-DQL.
// PI family:  exact (soft) policy iteration in DP mode; actor-critic, or
//             discrete SAC when lambda > 0, with exploration.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qoracle/approx.hpp"
#include "qoracle/envs.hpp"
#include "qoracle/errors.hpp"
#include "qoracle/mdp.hpp"
#include "qoracle/oracle.hpp"
#include "qoracle/replay_buffer.hpp"
#include "qoracle/table.hpp"

namespace qoracle {

enum class Family { vi, pi };
enum class ApproxMode { tabular, nn };
enum class ExploreMode { none, eps_greedy, softmax };

struct SolverConfig {
  Family family = Family::vi;
  ApproxMode approx = ApproxMode::tabular;
  ExploreMode explore = ExploreMode::none;
  double epsilon = 0.1;      // eps_greedy
  double temperature = 1.0;  // softmax behavior

  double kl_coef = 0.0;
  double er_coef = 0.0;
  double noise_sigma = 0.0;
  bool double_q = false;
  double munchausen_alpha = 0.0;
  double munchausen_clip = -1.0;  // floor for kappa * log pi in the Munchausen bonus

  std::size_t buffer_capacity = 100000;
  std::size_t batch_size = 64;
  std::size_t target_sync_period = 500;  // in gradient steps
  std::size_t steps_per_iter = 1000;     // env steps per RL iteration
  std::size_t train_every = 1;           // env steps between gradient steps
  std::size_t learning_starts = 0;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double actor_learning_rate = 1e-3;  // nn actor step size; tabular actor mixing weight
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::softplus;
  bool adversarial_reward = false;

  std::size_t eval_every = 1;
  std::uint64_t seed = 0;

  bool dp_mode() const { return explore == ExploreMode::none; }

  void validate() const {
    if (!(kl_coef >= 0.0) || !(er_coef >= 0.0)) throw ValidationError("kl_coef and er_coef must be >= 0");
    if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be >= 0");
    if (noise_sigma > 0.0 && !dp_mode()) throw ValidationError("noise_sigma is only meaningful in DP mode (explore = none)");
    if (dp_mode() && approx != ApproxMode::tabular) throw ValidationError("DP mode requires approx = tabular");
    if (!(munchausen_alpha >= 0.0 && munchausen_alpha <= 1.0)) throw ValidationError("munchausen_alpha must lie in [0,1]");
    if (munchausen_alpha > 0.0 && kl_coef + er_coef <= 0.0)
      throw ValidationError("munchausen_alpha > 0 requires kl_coef > 0 or er_coef > 0");
    if (!(munchausen_clip <= 0.0)) throw ValidationError("munchausen_clip must be <= 0");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must lie in [0,1]");
    if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (!(actor_learning_rate > 0.0)) throw ValidationError("actor_learning_rate must be positive");
    if (buffer_capacity == 0 || batch_size == 0 || target_sync_period == 0 || steps_per_iter == 0 || train_every == 0)
      throw ValidationError("buffer_capacity, batch_size, target_sync_period, steps_per_iter and train_every must be positive");
    if (eval_every == 0) throw ValidationError("eval_every must be positive");
  }
};

/// Exact per-state maximizer of <pi, Q> - tau KL(pi || prev) + lambda H(pi).
///
/// tau + lambda > 0: pi(a) proportional to prev(a)^(tau/(tau+lambda)) exp(Q(a)/(tau+lambda)).
/// tau + lambda = 0: one-hot on the lowest-index argmax.
inline void regularized_greedy_row(std::span<const double> q, std::span<const double> prev, double tau, double lambda,
                                   std::span<double> out) {
  const double kappa = tau + lambda;
  if (kappa <= 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    out[argmax(q)] = 1.0;
    return;
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < q.size(); ++a) {
    out[a] = q[a] / kappa;
    if (tau > 0.0) out[a] += (tau / kappa) * safe_log(prev[a]);
    mx = std::max(mx, out[a]);
  }
  double z = 0.0;
  for (double& x : out) z += (x = std::exp(x - mx));
  for (double& x : out) x /= z;
}

inline Policy regularized_greedy(const Table& q, const Policy& prev_pi, double tau, double lambda) {
  if (!(tau >= 0.0) || !(lambda >= 0.0)) throw ValidationError("regularized_greedy: coefficients must be >= 0");
  if (tau > 0.0 && !q.same_shape(prev_pi)) throw DimensionError("regularized_greedy: prev_pi shape mismatch");
  Policy pi(q.rows(), q.cols());
  for (std::size_t s = 0; s < q.rows(); ++s)
    regularized_greedy_row(q.row(s), tau > 0.0 ? prev_pi.row(s) : q.row(s), tau, lambda, pi.row(s));
  return pi;
}

/// Everything one run mutates. Owned by a single thread.
struct SolverState {
  std::size_t iteration = 0;
  std::size_t env_steps = 0;
  std::size_t grad_steps = 0;
  QFunction q;
  QFunction target_q;
  Policy policy;                  // pi_k in DP mode, the actor table in tabular RL
  std::optional<PolicyNet> actor;  // actor network for the PI family with approx = nn
  OptimizerState q_opt;
  OptimizerState actor_opt;
  ReplayBuffer buffer{1};
  std::optional<EpisodicEnv> env;
  Rng rng;
  double last_residual = std::numeric_limits<double>::quiet_NaN();
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
};

/// Independent stream seeds from one run seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline SolverState make_state(const SolverConfig& cfg, const Environment& env) {
  cfg.validate();
  const TabularMdp& mdp = env.mdp;
  SolverState st;
  st.rng = Rng(derive_seed(cfg.seed, 0));
  st.policy = Policy::uniform(mdp.n_states(), mdp.n_actions());
  if (cfg.approx == ApproxMode::tabular) {
    st.q = QFunction::tabular(mdp.n_states(), mdp.n_actions(), mdp.terminal_mask());
  } else {
    if (env.features.size() != mdp.n_states()) throw ValidationError("approx = nn needs per-state features");
    auto features = FeatureMap::from(env);
    std::vector<std::size_t> sizes{static_cast<std::size_t>(features->columns.rows())};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(mdp.n_actions());
    st.q = QFunction::mlp(features, mdp.n_actions(), Mlp(sizes, cfg.activation, derive_seed(cfg.seed, 1)));
    if (cfg.family == Family::pi)
      st.actor = PolicyNet(features, Mlp(sizes, cfg.activation, derive_seed(cfg.seed, 2)));
  }
  st.target_q = sync_target(st.q);
  st.q_opt = OptimizerState(cfg.optimizer, cfg.learning_rate);
  st.actor_opt = OptimizerState(cfg.optimizer, cfg.actor_learning_rate);
  if (!cfg.dp_mode()) {
    st.buffer = ReplayBuffer(cfg.buffer_capacity);
    st.env.emplace(env.mdp, env.spec.episode_len, derive_seed(cfg.seed, 3));
  }
  return st;
}

/// One regularized DP step:
///   pi_{k+1} = regularized_greedy(Q_k, pi_k, tau, lambda)
///   Q_{k+1}  = r + gamma P <pi_{k+1}, Q_k - tau log(pi_{k+1}/pi_k) - lambda log pi_{k+1}> + eps_k,
/// eps_k ~ N(0, sigma^2) i.i.d. per cell.
inline void dp_iterate(SolverState& st, const TabularMdp& mdp, const SolverConfig& cfg) {
  if (!cfg.dp_mode() || !st.q.is_tabular()) throw UsageError("dp_iterate needs explore = none and approx = tabular");
  const double tau = cfg.kl_coef, lambda = cfg.er_coef;
  const QTable& q = st.q.table();
  Policy next_pi = regularized_greedy(q, st.policy, tau, lambda);

  VTable v(mdp.n_states());
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    double acc = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double p = next_pi(s, a);
      if (p == 0.0) continue;
      double term = q(s, a);
      if (tau > 0.0) term -= tau * (safe_log(p) - safe_log(st.policy(s, a)));
      if (lambda > 0.0) term -= lambda * safe_log(p);
      acc += p * term;
    }
    v[s] = acc;
  }
  QTable next_q = backup_from_values(mdp, v);
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (double& x : next_q.values()) x += noise(st.rng);
  }
  if (!next_q.all_finite()) throw DivergenceError("dp_iterate: non-finite Q", st.iteration);
  st.last_residual = sup_norm_diff(next_q, q);
  st.q.table() = std::move(next_q);
  st.policy = std::move(next_pi);
  ++st.iteration;
}

namespace detail {

/// log softmax(q / kappa) for one column.
inline Eigen::VectorXd log_softmax(const Eigen::VectorXd& q, double kappa) {
  const Eigen::VectorXd z = q / kappa;
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return (z.array() - lse).matrix();
}

inline std::vector<std::size_t> next_states(std::span<const Transition> batch) {
  std::vector<std::size_t> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out[i] = batch[i].next_state;
  return out;
}

inline std::vector<std::size_t> states(std::span<const Transition> batch) {
  std::vector<std::size_t> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out[i] = batch[i].state;
  return out;
}

}  // namespace detail

/// Bootstrapped regression targets for the VI family.
///
///   default:    r + gamma max_a' Qt(s', a')
///   double_q:   r + gamma Qt(s', argmax_a' Q(s', a'))
///   kappa > 0:  r + alpha clip(kappa log pi(a|s)) + gamma sum_a' pi(a'|s') (Qt(s',a') - kappa log pi(a'|s'))
///               with pi = softmax(Qt / kappa), kappa = tau + lambda; alpha = 0 is the soft target
///
/// True terminals do not bootstrap; timeouts do.
inline std::vector<double> compute_targets(std::span<const Transition> batch, const QFunction& q,
                                           const QFunction& target_q, const SolverConfig& cfg, double gamma) {
  std::vector<double> out(batch.size());
  const auto next = detail::next_states(batch);
  const Eigen::MatrixXd tq_next = target_q.eval_batch(next);
  const double kappa = cfg.kl_coef + cfg.er_coef;

  if (kappa > 0.0) {
    const auto cur = detail::states(batch);
    const Eigen::MatrixXd tq_cur = target_q.eval_batch(cur);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      double bonus = 0.0;
      if (cfg.munchausen_alpha > 0.0) {
        const Eigen::VectorXd logpi = detail::log_softmax(tq_cur.col(col), kappa);
        const double scaled = std::clamp(kappa * logpi(static_cast<Eigen::Index>(batch[i].action)), cfg.munchausen_clip, 0.0);
        bonus = cfg.munchausen_alpha * scaled;
      }
      double boot = 0.0;
      if (!batch[i].terminal) {
        const Eigen::VectorXd qn = tq_next.col(col);
        const Eigen::VectorXd logpi = detail::log_softmax(qn, kappa);
        boot = (logpi.array().exp() * (qn.array() - kappa * logpi.array())).sum();
      }
      out[i] = batch[i].reward + bonus + gamma * boot;
    }
    return out;
  }

  Eigen::MatrixXd q_next;
  if (cfg.double_q) q_next = q.eval_batch(next);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    double boot = 0.0;
    if (!batch[i].terminal) {
      if (cfg.double_q) {
        Eigen::Index best = 0;
        q_next.col(col).maxCoeff(&best);  // first maximum: lowest index
        boot = tq_next(best, col);
      } else {
        boot = tq_next.col(col).maxCoeff();
      }
    }
    out[i] = batch[i].reward + gamma * boot;
  }
  return out;
}

inline double target_value(const Transition& t, const QFunction& q, const QFunction& target_q, const SolverConfig& cfg,
                           double gamma) {
  const Transition one[1] = {t};
  return compute_targets(one, q, target_q, cfg, gamma)[0];
}

/// Action distribution of the current actor at the listed states (n_actions x states.size()).
inline Eigen::MatrixXd actor_probs(const SolverState& st, std::span<const std::size_t> states) {
  if (st.actor) return st.actor->probs(states);
  Eigen::MatrixXd p(static_cast<Eigen::Index>(st.policy.cols()), static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i)
    for (std::size_t a = 0; a < st.policy.cols(); ++a)
      p(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i)) = st.policy(states[i], a);
  return p;
}

namespace detail {

inline std::size_t behavior_action(SolverState& st, std::size_t s, const SolverConfig& cfg) {
  const std::size_t n_actions = st.q.n_actions();
  std::vector<double> probs;
  if (cfg.family == Family::pi) {
    const std::size_t one[1] = {s};
    const Eigen::MatrixXd p = actor_probs(st, one);
    probs.assign(p.data(), p.data() + p.size());
  } else if (cfg.explore == ExploreMode::softmax) {
    const auto q = q_eval(st.q, s);
    probs.resize(n_actions);
    const double mx = *std::max_element(q.begin(), q.end());
    double z = 0.0;
    for (std::size_t a = 0; a < n_actions; ++a) z += (probs[a] = std::exp((q[a] - mx) / cfg.temperature));
    for (double& p : probs) p /= z;
  } else {
    if (cfg.epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(st.rng) < cfg.epsilon)
      return std::uniform_int_distribution<std::size_t>(0, n_actions - 1)(st.rng);
    return argmax(q_eval(st.q, s));
  }
  if (cfg.explore == ExploreMode::eps_greedy && cfg.family == Family::pi && cfg.epsilon > 0.0)
    for (double& p : probs) p = (1.0 - cfg.epsilon) * p + cfg.epsilon / static_cast<double>(n_actions);
  return sample_index(probs, st.rng);
}

inline void record_loss(SolverState& st, double loss) {
  st.loss_sum += loss;
  ++st.loss_count;
}

inline void maybe_sync(SolverState& st, const SolverConfig& cfg) {
  if (st.grad_steps % cfg.target_sync_period == 0) st.target_q = sync_target(st.q);
}

inline void train_vi(SolverState& st, const SolverConfig& cfg, double gamma, std::vector<Transition>& batch) {
  st.buffer.sample(cfg.batch_size, st.rng, batch);
  const auto targets = compute_targets(batch, st.q, st.target_q, cfg, gamma);
  std::vector<FitItem> items(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) items[i] = {batch[i].state, batch[i].action, targets[i]};
  record_loss(st, fit_step(st.q, st.q_opt, items, st.grad_steps));
  ++st.grad_steps;
  maybe_sync(st, cfg);
}

/// Critic toward r + gamma sum_a' pi(a'|s') (Qt(s',a') - lambda log pi(a'|s')), then the actor
/// toward regularized_greedy of the updated critic at the sampled states.
inline void train_pi(SolverState& st, const SolverConfig& cfg, double gamma, std::vector<Transition>& batch) {
  st.buffer.sample(cfg.batch_size, st.rng, batch);
  const auto next = next_states(batch);
  const auto cur = states(batch);
  const Eigen::MatrixXd pi_next = actor_probs(st, next);
  const Eigen::MatrixXd tq_next = st.target_q.eval_batch(next);
  const double lambda = cfg.er_coef;
  std::vector<FitItem> items(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    double boot = 0.0;
    if (!batch[i].terminal)
      for (Eigen::Index a = 0; a < pi_next.rows(); ++a) {
        const double p = pi_next(a, col);
        if (p > 0.0) boot += p * (tq_next(a, col) - lambda * safe_log(p));
      }
    items[i] = {batch[i].state, batch[i].action, batch[i].reward + gamma * boot};
  }
  record_loss(st, fit_step(st.q, st.q_opt, items, st.grad_steps));

  const Eigen::MatrixXd q_cur = st.q.eval_batch(cur);
  const Eigen::MatrixXd pi_cur = actor_probs(st, cur);
  Eigen::MatrixXd targets(pi_cur.rows(), pi_cur.cols());
  std::vector<double> row(static_cast<std::size_t>(pi_cur.rows()));
  for (Eigen::Index j = 0; j < pi_cur.cols(); ++j) {
    const Eigen::VectorXd qc = q_cur.col(j);
    const Eigen::VectorXd pc = pi_cur.col(j);
    regularized_greedy_row({qc.data(), static_cast<std::size_t>(qc.size())},
                           {pc.data(), static_cast<std::size_t>(pc.size())}, cfg.kl_coef, lambda, row);
    for (Eigen::Index a = 0; a < targets.rows(); ++a) targets(a, j) = row[static_cast<std::size_t>(a)];
  }
  if (st.actor) {
    st.actor->fit_step(st.actor_opt, cur, targets, st.grad_steps);
  } else {
    const double beta = std::min(1.0, cfg.actor_learning_rate);
    for (std::size_t i = 0; i < cur.size(); ++i)
      for (std::size_t a = 0; a < st.policy.cols(); ++a) {
        double& p = st.policy(cur[i], a);
        p = (1.0 - beta) * p + beta * targets(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i));
      }
  }
  ++st.grad_steps;
  maybe_sync(st, cfg);
}

}  // namespace detail

/// Collects steps_per_iter transitions with the behavior policy and fits after every
/// train_every of them. Works for both families; the PI family trains critic and actor.
inline void rl_step(SolverState& st, const SolverConfig& cfg) {
  if (cfg.dp_mode() || !st.env) throw UsageError("rl_step needs an exploring configuration");
  EpisodicEnv& env = *st.env;
  const double gamma = env.mdp().discount();
  std::vector<Transition> batch;
  batch.reserve(cfg.batch_size);
  for (std::size_t t = 0; t < cfg.steps_per_iter; ++t) {
    if (env.done()) env.reset();
    const std::size_t s = env.state();
    const std::size_t a = detail::behavior_action(st, s, cfg);
    const EnvStep out = env.step(a);
    const double r = cfg.adversarial_reward ? adversarial_reward(out.reward, st.rng) : out.reward;
    st.buffer.push({s, a, r, out.next_state, out.terminal, out.timeout});
    ++st.env_steps;
    if (st.env_steps < cfg.learning_starts || st.env_steps % cfg.train_every != 0) continue;
    if (cfg.family == Family::pi)
      detail::train_pi(st, cfg, gamma, batch);
    else
      detail::train_vi(st, cfg, gamma, batch);
  }
  ++st.iteration;
}

/// Policy iteration step. DP mode: evaluate pi with entropy bonus lambda exactly, then
/// improve with regularized_greedy. RL mode: actor-critic / discrete SAC via rl_step.
inline void pi_iterate(SolverState& st, const TabularMdp& mdp, const SolverConfig& cfg) {
  if (cfg.family != Family::pi) throw UsageError("pi_iterate needs family = pi");
  if (!cfg.dp_mode()) {
    rl_step(st, cfg);
    return;
  }
  RegularizationSpec reg;
  reg.er_coef = cfg.er_coef;
  QTable q = calc_q(mdp, st.policy, reg);
  Policy next = regularized_greedy(q, st.policy, cfg.kl_coef, cfg.er_coef);
  st.last_residual = sup_norm_diff(q, st.q.table());
  st.q.table() = std::move(q);
  st.policy = std::move(next);
  ++st.iteration;
}

/// The policy a run is judged by: pi_k in DP mode, the actor for the PI family,
/// greedy(Q) for value-based learners.
inline Policy current_policy(const SolverState& st, const SolverConfig& cfg, const TabularMdp& mdp) {
  if (cfg.dp_mode()) return st.policy;
  if (cfg.family == Family::pi) {
    if (!st.actor) return st.policy;
    std::vector<std::size_t> all(mdp.n_states());
    for (std::size_t s = 0; s < all.size(); ++s) all[s] = s;
    const Eigen::MatrixXd p = st.actor->probs(all);
    Policy pi(mdp.n_states(), mdp.n_actions());
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
      double z = 0.0;
      for (std::size_t a = 0; a < mdp.n_actions(); ++a) z += pi(s, a) = p(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s));
      for (std::size_t a = 0; a < mdp.n_actions(); ++a) pi(s, a) /= z;
    }
    return pi;
  }
  return greedy_policy(extract_table(st.q, mdp));
}

struct MetricRow {
  std::size_t iteration = 0;
  std::size_t env_steps = 0;
  double ret = 0.0;         // calc_return of the evaluated policy
  double loss = 0.0;        // mean fit loss since the last row; DP: sup-norm change of Q
  double gap = 0.0;         // || Q_* - Q ||_inf for the learned table
  double policy_gap = 0.0;  // || Q_* - Q_pi ||_inf for the evaluated policy
  std::size_t buffer_support = 0;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct RunArtifact {
  SolverConfig config;
  std::vector<MetricRow> metrics;
  QTable q;                            // final learned table
  Table gap;                           // Q - Q_*, cellwise (positive = overestimate)
  VisitTable visit;                    // calc_visit of the final policy
  std::optional<VisitTable> buffer_counts;  // count_visit of the final buffer
  Policy policy;
  bool failed = false;
  std::string error;
  double wall_seconds = 0.0;
};

struct RunCallbacks {
  std::function<void(const SolverState&, const MetricRow&)> on_eval;
};

/// Precomputed per-environment oracle quantities shared by runs.
struct EvalContext {
  QTable q_star;
  std::size_t return_horizon = 1;

  static EvalContext for_env(const Environment& env) {
    return {calc_optimal_q(env.mdp), env.spec.episode_len};
  }
};

inline MetricRow evaluate(SolverState& st, const SolverConfig& cfg, const Environment& env, const EvalContext& ctx) {
  const TabularMdp& mdp = env.mdp;
  const Policy pi = current_policy(st, cfg, mdp);
  const QTable q = extract_table(st.q, mdp);
  MetricRow row;
  row.iteration = st.iteration;
  row.env_steps = st.env_steps;
  row.ret = calc_return(mdp, pi, ctx.return_horizon);
  row.gap = optimality_gap(ctx.q_star, q);
  row.policy_gap = optimality_gap(ctx.q_star, calc_q(mdp, pi));
  if (cfg.dp_mode()) {
    row.loss = st.last_residual;
  } else {
    row.loss = st.loss_count ? st.loss_sum / static_cast<double>(st.loss_count) : std::numeric_limits<double>::quiet_NaN();
    st.loss_sum = 0.0;
    st.loss_count = 0;
  }
  row.buffer_support = st.buffer.empty() ? 0 : count_visit(st.buffer, mdp).support();
  return row;
}

/// Seeds everything from cfg.seed, loops the configured iterate n_iterations times and
/// appends an evaluation row every cfg.eval_every iterations. Iterate failures are
/// recorded in the artifact (failed, error) with the rows logged so far.
inline RunArtifact run(const SolverConfig& cfg, const Environment& env, std::size_t n_iterations,
                       const EvalContext& ctx, const RunCallbacks& callbacks = {}) {
  const auto started = std::chrono::steady_clock::now();
  RunArtifact art;
  art.config = cfg;
  SolverState st = make_state(cfg, env);
  try {
    for (std::size_t k = 0; k < n_iterations; ++k) {
      if (cfg.family == Family::pi)
        pi_iterate(st, env.mdp, cfg);
      else if (cfg.dp_mode())
        dp_iterate(st, env.mdp, cfg);
      else
        rl_step(st, cfg);
      if (st.iteration % cfg.eval_every == 0) {
        art.metrics.push_back(evaluate(st, cfg, env, ctx));
        if (callbacks.on_eval) callbacks.on_eval(st, art.metrics.back());
      }
    }
  } catch (const DivergenceError& e) {
    art.failed = true;
    art.error = e.what();
  } catch (const ConvergenceError& e) {
    art.failed = true;
    art.error = e.what();
  }
  const TabularMdp& mdp = env.mdp;
  art.q = extract_table(st.q, mdp);
  art.gap = Table(mdp.n_states(), mdp.n_actions());
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) art.gap(s, a) = art.q(s, a) - ctx.q_star(s, a);
  art.policy = current_policy(st, cfg, mdp);
  if (art.q.all_finite() && art.policy.all_finite()) art.visit = calc_visit(mdp, art.policy);
  if (!st.buffer.empty()) art.buffer_counts = count_visit(st.buffer, mdp);
  art.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return art;
}

inline RunArtifact run(const SolverConfig& cfg, const Environment& env, std::size_t n_iterations,
                       const RunCallbacks& callbacks = {}) {
  return run(cfg, env, n_iterations, EvalContext::for_env(env), callbacks);
}

}  // namespace qoracle

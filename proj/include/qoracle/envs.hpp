#pragma once

// Tabular builds of the maze and the three classic-control tasks, plus an
// episodic step/reset wrapper over any TabularMdp.
//
// Continuous tasks are discretized on a regular grid. Each (bin, action)
// successor is obtained by running the native dynamics from the bin center
// for `action_repeat` integration steps and snapping the result to its
// containing bin, which yields a deterministic kernel.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qoracle/errors.hpp"
#include "qoracle/mdp.hpp"
#include "qoracle/table.hpp"

namespace qoracle {

enum class EnvKind { maze, cartpole, mountaincar, pendulum };

inline const char* to_string(EnvKind k) {
  switch (k) {
    case EnvKind::maze: return "maze";
    case EnvKind::cartpole: return "cartpole";
    case EnvKind::mountaincar: return "mountaincar";
    case EnvKind::pendulum: return "pendulum";
  }
  return "?";
}

inline std::optional<EnvKind> env_kind_from_string(const std::string& s) {
  if (s == "maze") return EnvKind::maze;
  if (s == "cartpole") return EnvKind::cartpole;
  if (s == "mountaincar") return EnvKind::mountaincar;
  if (s == "pendulum") return EnvKind::pendulum;
  return std::nullopt;
}

/// Default 5x5 maze. '.' free, '#' wall, 'S' start, 'G' goal.
inline std::vector<std::string> default_maze_layout() {
  return {"S...#",
          ".##..",
          "...#.",
          ".#...",
          "...#G"};
}

struct EnvSpec {
  EnvKind kind = EnvKind::maze;
  std::vector<std::size_t> state_bins;  // per continuous state dimension
  std::size_t action_bins = 0;          // discretized continuous actions
  std::size_t episode_len = 100;
  std::vector<std::string> maze_layout;
  double discount = 0.95;
  std::size_t action_repeat = 1;  // native integration steps per tabular step
  double torque_cost = 0.001;     // pendulum only

  static EnvSpec defaults(EnvKind kind) {
    EnvSpec spec;
    spec.kind = kind;
    switch (kind) {
      case EnvKind::maze:
        spec.maze_layout = default_maze_layout();
        spec.episode_len = 100;
        spec.discount = 0.95;
        break;
      case EnvKind::cartpole:
        spec.state_bins = {8, 8, 8, 8};
        spec.action_bins = 2;
        spec.episode_len = 200;
        spec.discount = 0.99;
        spec.action_repeat = 5;
        break;
      case EnvKind::mountaincar:
        spec.state_bins = {32, 32};
        spec.action_bins = 3;
        spec.episode_len = 200;
        spec.discount = 0.99;
        spec.action_repeat = 8;
        break;
      case EnvKind::pendulum:
        spec.state_bins = {32, 32};
        spec.action_bins = 5;
        spec.episode_len = 200;
        spec.discount = 0.99;
        spec.action_repeat = 4;
        break;
    }
    return spec;
  }

  std::size_t state_dims() const {
    switch (kind) {
      case EnvKind::maze: return 2;
      case EnvKind::cartpole: return 4;
      default: return 2;
    }
  }

  void validate() const {
    if (episode_len < 1) throw ValidationError("episode_len must be >= 1");
    if (!(discount > 0.0 && discount < 1.0)) throw ValidationError("discount must lie strictly inside (0,1)");
    if (action_repeat < 1) throw ValidationError("action_repeat must be >= 1");
    if (kind == EnvKind::maze) {
      if (maze_layout.empty()) throw ValidationError("maze layout is empty");
      const std::size_t width = maze_layout.front().size();
      bool start = false, goal = false;
      for (const auto& row : maze_layout) {
        if (row.size() != width || width == 0) throw ValidationError("maze rows must have equal nonzero width");
        for (char c : row) {
          if (c != '.' && c != '#' && c != 'S' && c != 'G')
            throw ValidationError(std::string("unknown maze cell '") + c + "'");
          start |= c == 'S';
          goal |= c == 'G';
        }
      }
      if (!start) throw ValidationError("maze needs at least one start cell 'S'");
      if (!goal) throw ValidationError("maze needs at least one goal cell 'G'");
      return;
    }
    if (state_bins.size() != state_dims())
      throw ValidationError(std::string(to_string(kind)) + " needs " + std::to_string(state_dims()) + " state bin counts");
    for (std::size_t b : state_bins)
      if (b < 2) throw ValidationError("bin counts must be >= 2");
    if (action_bins < 2) throw ValidationError("action_bins must be >= 2");
    if (!(torque_cost >= 0.0)) throw ValidationError("torque_cost must be >= 0");
  }
};

/// Maps states onto a 2-D grid for heatmaps. Cells without a state hold -1.
struct GridLayout {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<long> cell_state;  // row-major, row 0 drawn at the top
  std::string x_label;
  std::string y_label;
};

/// A built environment: the tabular model plus what learners and plots need.
struct Environment {
  EnvSpec spec;
  TabularMdp mdp;
  std::vector<std::vector<double>> features;  // per state, each coordinate in [-1, 1]
  std::optional<GridLayout> grid;
  std::vector<double> action_values;  // native action (force/torque) per action index, if continuous
};

namespace detail {

struct Axis {
  double lo;
  double hi;
  std::size_t bins;

  double width() const { return (hi - lo) / static_cast<double>(bins); }
  double center(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * width(); }
  std::size_t bin(double x) const {
    const double f = std::floor((x - lo) / width());
    if (f < 0.0) return 0;
    return std::min(static_cast<std::size_t>(f), bins - 1);
  }
  double normalized(std::size_t i) const {
    return bins == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(bins - 1);
  }
  /// Fraction of [a, b] that falls inside bin i.
  double overlap(std::size_t i, double a, double b) const {
    if (b <= a) return 0.0;
    const double l = lo + static_cast<double>(i) * width();
    const double r = l + width();
    return std::max(0.0, std::min(b, r) - std::max(a, l)) / (b - a);
  }
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

inline double wrap_angle(double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double y = std::fmod(x + std::numbers::pi, two_pi);
  if (y < 0.0) y += two_pi;
  return y - std::numbers::pi;
}

inline Environment build_maze(const EnvSpec& spec) {
  const auto& layout = spec.maze_layout;
  const std::size_t rows = layout.size();
  const std::size_t cols = layout.front().size();
  GridLayout grid{rows, cols, std::vector<long>(rows * cols, -1), "column", "row"};
  std::size_t n = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (layout[r][c] != '#') grid.cell_state[r * cols + c] = static_cast<long>(n++);

  constexpr std::size_t n_actions = 4;  // up, down, left, right
  constexpr int dr[n_actions] = {-1, 1, 0, 0};
  constexpr int dc[n_actions] = {0, 0, -1, 1};

  std::vector<std::vector<Successor>> kernel(n * n_actions);
  Table rewards(n, n_actions);
  std::vector<double> init(n, 0.0);
  std::vector<bool> terminal(n, false);
  std::vector<std::vector<double>> features(n);
  std::size_t starts = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) starts += layout[r][c] == 'S';

  auto norm = [](std::size_t i, std::size_t count) {
    return count == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(count - 1);
  };
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const long id = grid.cell_state[r * cols + c];
      if (id < 0) continue;
      const auto s = static_cast<std::size_t>(id);
      features[s] = {norm(r, rows), norm(c, cols)};
      if (layout[r][c] == 'S') init[s] = 1.0 / static_cast<double>(starts);
      terminal[s] = layout[r][c] == 'G';
      for (std::size_t a = 0; a < n_actions; ++a) {
        std::size_t next = s;
        if (!terminal[s]) {
          const long nr = static_cast<long>(r) + dr[a];
          const long nc = static_cast<long>(c) + dc[a];
          if (nr >= 0 && nc >= 0 && nr < static_cast<long>(rows) && nc < static_cast<long>(cols)) {
            const long target = grid.cell_state[static_cast<std::size_t>(nr) * cols + static_cast<std::size_t>(nc)];
            if (target >= 0) next = static_cast<std::size_t>(target);
          }
          rewards(s, a) = -1.0;
        }
        kernel[s * n_actions + a] = {{next, 1.0}};
      }
    }
  TabularMdp mdp(n, n_actions, spec.discount, kernel, std::move(rewards), std::move(init), std::move(terminal));
  return {spec, std::move(mdp), std::move(features), std::move(grid), {}};
}

inline Environment build_mountaincar(const EnvSpec& spec) {
  const Axis pos{-1.2, 0.6, spec.state_bins[0]};
  const Axis vel{-0.07, 0.07, spec.state_bins[1]};
  constexpr double force = 0.001, gravity = 0.0025, goal_position = 0.5;
  const std::size_t grid_states = pos.bins * vel.bins;
  const std::size_t goal = grid_states;
  const std::size_t n = grid_states + 1;
  const std::size_t n_actions = spec.action_bins;
  const auto pushes = linspace(-1.0, 1.0, n_actions);

  std::vector<std::vector<Successor>> kernel(n * n_actions);
  Table rewards(n, n_actions);
  std::vector<double> init(n, 0.0);
  std::vector<bool> terminal(n, false);
  terminal[goal] = true;
  std::vector<std::vector<double>> features(n);
  GridLayout grid{vel.bins, pos.bins, std::vector<long>(grid_states, -1), "position", "velocity"};

  const std::size_t zero_vel = vel.bin(0.0);
  for (std::size_t i = 0; i < pos.bins; ++i)
    for (std::size_t j = 0; j < vel.bins; ++j) {
      const std::size_t s = i * vel.bins + j;
      features[s] = {pos.normalized(i), vel.normalized(j)};
      grid.cell_state[(vel.bins - 1 - j) * pos.bins + i] = static_cast<long>(s);
      if (j == zero_vel) init[s] = pos.overlap(i, -0.6, -0.4);
      for (std::size_t a = 0; a < n_actions; ++a) {
        double p = pos.center(i), v = vel.center(j);
        bool reached = false;
        for (std::size_t k = 0; k < spec.action_repeat && !reached; ++k) {
          v = std::clamp(v + pushes[a] * force - std::cos(3.0 * p) * gravity, vel.lo, vel.hi);
          p = std::clamp(p + v, pos.lo, pos.hi);
          if (p <= pos.lo && v < 0.0) v = 0.0;
          reached = p >= goal_position;
        }
        const std::size_t next = reached ? goal : pos.bin(p) * vel.bins + vel.bin(v);
        kernel[s * n_actions + a] = {{next, 1.0}};
        rewards(s, a) = -1.0;
      }
    }
  features[goal] = {1.0, 0.0};
  for (std::size_t a = 0; a < n_actions; ++a) kernel[goal * n_actions + a] = {{goal, 1.0}};

  TabularMdp mdp(n, n_actions, spec.discount, kernel, std::move(rewards), std::move(init), std::move(terminal));
  std::vector<double> actions(n_actions);
  for (std::size_t a = 0; a < n_actions; ++a) actions[a] = pushes[a] * force;
  return {spec, std::move(mdp), std::move(features), std::move(grid), std::move(actions)};
}

inline Environment build_pendulum(const EnvSpec& spec) {
  const Axis angle{-std::numbers::pi, std::numbers::pi, spec.state_bins[0]};
  const Axis vel{-8.0, 8.0, spec.state_bins[1]};
  constexpr double g = 10.0, m = 1.0, l = 1.0, dt = 0.05, max_torque = 2.0;
  const std::size_t n = angle.bins * vel.bins;
  const std::size_t n_actions = spec.action_bins;
  const auto torques = linspace(-max_torque, max_torque, n_actions);

  std::vector<std::vector<Successor>> kernel(n * n_actions);
  Table rewards(n, n_actions);
  std::vector<double> init(n, 0.0);
  std::vector<std::vector<double>> features(n);
  GridLayout grid{vel.bins, angle.bins, std::vector<long>(n, -1), "angle", "angular velocity"};

  for (std::size_t i = 0; i < angle.bins; ++i)
    for (std::size_t j = 0; j < vel.bins; ++j) {
      const std::size_t s = i * vel.bins + j;
      features[s] = {angle.normalized(i), vel.normalized(j)};
      grid.cell_state[(vel.bins - 1 - j) * angle.bins + i] = static_cast<long>(s);
      init[s] = vel.overlap(j, -1.0, 1.0) / static_cast<double>(angle.bins);
      for (std::size_t a = 0; a < n_actions; ++a) {
        const double u = torques[a];
        double th = angle.center(i), thdot = vel.center(j);
        rewards(s, a) = -(th * th + 0.1 * thdot * thdot + spec.torque_cost * u * u);
        for (std::size_t k = 0; k < spec.action_repeat; ++k) {
          thdot = std::clamp(thdot + (3.0 * g / (2.0 * l) * std::sin(th) + 3.0 / (m * l * l) * u) * dt, vel.lo, vel.hi);
          th = wrap_angle(th + thdot * dt);
        }
        kernel[s * n_actions + a] = {{angle.bin(th) * vel.bins + vel.bin(thdot), 1.0}};
      }
    }
  TabularMdp mdp(n, n_actions, spec.discount, kernel, std::move(rewards), std::move(init));
  return {spec, std::move(mdp), std::move(features), std::move(grid), torques};
}

inline Environment build_cartpole(const EnvSpec& spec) {
  constexpr double gravity = 9.8, masscart = 1.0, masspole = 0.1, length = 0.5, force_mag = 10.0, tau = 0.02;
  constexpr double total_mass = masscart + masspole, polemass_length = masspole * length;
  constexpr double x_limit = 2.4, theta_limit = 12.0 * 2.0 * std::numbers::pi / 360.0;
  const Axis axes[4] = {{-x_limit, x_limit, spec.state_bins[0]},
                        {-3.0, 3.0, spec.state_bins[1]},
                        {-theta_limit, theta_limit, spec.state_bins[2]},
                        {-3.5, 3.5, spec.state_bins[3]}};
  std::size_t grid_states = 1;
  for (const Axis& ax : axes) grid_states *= ax.bins;
  const std::size_t failed = grid_states;
  const std::size_t n = grid_states + 1;
  const std::size_t n_actions = spec.action_bins;
  const auto forces = linspace(-force_mag, force_mag, n_actions);

  std::vector<std::vector<Successor>> kernel(n * n_actions);
  Table rewards(n, n_actions);
  std::vector<double> init(n, 0.0);
  std::vector<bool> terminal(n, false);
  terminal[failed] = true;
  std::vector<std::vector<double>> features(n);

  for (std::size_t s = 0; s < grid_states; ++s) {
    std::size_t idx[4];
    std::size_t rest = s;
    for (int d = 3; d >= 0; --d) {
      idx[d] = rest % axes[d].bins;
      rest /= axes[d].bins;
    }
    double start_mass = 1.0;
    features[s].resize(4);
    for (int d = 0; d < 4; ++d) {
      features[s][d] = axes[d].normalized(idx[d]);
      start_mass *= axes[d].overlap(idx[d], -0.05, 0.05);
    }
    init[s] = start_mass;
    for (std::size_t a = 0; a < n_actions; ++a) {
      double x = axes[0].center(idx[0]), x_dot = axes[1].center(idx[1]);
      double theta = axes[2].center(idx[2]), theta_dot = axes[3].center(idx[3]);
      bool fell = false;
      for (std::size_t k = 0; k < spec.action_repeat && !fell; ++k) {
        const double cos_t = std::cos(theta), sin_t = std::sin(theta);
        const double temp = (forces[a] + polemass_length * theta_dot * theta_dot * sin_t) / total_mass;
        const double theta_acc =
            (gravity * sin_t - cos_t * temp) / (length * (4.0 / 3.0 - masspole * cos_t * cos_t / total_mass));
        const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;
        x += tau * x_dot;
        x_dot += tau * x_acc;
        theta += tau * theta_dot;
        theta_dot += tau * theta_acc;
        fell = std::abs(x) > x_limit || std::abs(theta) > theta_limit;
      }
      std::size_t next = failed;
      if (!fell) {
        const double coords[4] = {x, std::clamp(x_dot, axes[1].lo, axes[1].hi), theta,
                                  std::clamp(theta_dot, axes[3].lo, axes[3].hi)};
        next = 0;
        for (int d = 0; d < 4; ++d) next = next * axes[d].bins + axes[d].bin(coords[d]);
      }
      kernel[s * n_actions + a] = {{next, 1.0}};
      rewards(s, a) = 1.0;
    }
  }
  features[failed] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t a = 0; a < n_actions; ++a) kernel[failed * n_actions + a] = {{failed, 1.0}};
  // start mass is a product of per-axis overlaps; renormalize away rounding
  double mass = 0.0;
  for (double p : init) mass += p;
  for (double& p : init) p /= mass;

  TabularMdp mdp(n, n_actions, spec.discount, kernel, std::move(rewards), std::move(init), std::move(terminal));
  return {spec, std::move(mdp), std::move(features), std::nullopt, forces};
}

}  // namespace detail

inline Environment make_environment(const EnvSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case EnvKind::maze: return detail::build_maze(spec);
    case EnvKind::mountaincar: return detail::build_mountaincar(spec);
    case EnvKind::pendulum: return detail::build_pendulum(spec);
    case EnvKind::cartpole: return detail::build_cartpole(spec);
  }
  throw ValidationError("unknown environment kind");
}

inline TabularMdp build(const EnvSpec& spec) { return make_environment(spec).mdp; }

/// Adversarial reward perturbation: rewards at or below -5 get N(4.9, 0.1^2) added.
inline double adversarial_reward(double r, Rng& rng) {
  if (r > -5.0) return r;
  return r + std::normal_distribution<double>(4.9, 0.1)(rng);
}

struct EnvStep {
  std::size_t next_state;
  double reward;
  bool terminal;  // reached an absorbing terminal state
  bool timeout;   // hit the episode length without terminating
  bool done() const { return terminal || timeout; }
};

/// Single-owner step/reset interaction over a TabularMdp. The MDP must outlive it.
class EpisodicEnv {
 public:
  EpisodicEnv(const TabularMdp& mdp, std::size_t episode_len, std::uint64_t seed)
      : mdp_(&mdp), episode_len_(episode_len), rng_(seed) {
    if (episode_len_ < 1) throw ValidationError("episode_len must be >= 1");
  }

  std::size_t reset() {
    state_ = sample_index(mdp_->initial_dist(), rng_);
    steps_ = 0;
    done_ = false;
    return state_;
  }

  EnvStep step(std::size_t action) {
    if (done_) throw UsageError("step called on a finished episode; call reset first");
    const StepResult r = qoracle::step(*mdp_, rng_, state_, action);
    state_ = r.next_state;
    ++steps_;
    const bool timeout = !r.done && steps_ >= episode_len_;
    done_ = r.done || timeout;
    return {r.next_state, r.reward, r.done, timeout};
  }

  std::size_t state() const { return state_; }
  std::size_t steps_elapsed() const { return steps_; }
  std::size_t episode_len() const { return episode_len_; }
  bool done() const { return done_; }
  const TabularMdp& mdp() const { return *mdp_; }

 private:
  const TabularMdp* mdp_;
  std::size_t episode_len_;
  Rng rng_;
  std::size_t state_ = 0;
  std::size_t steps_ = 0;
  bool done_ = true;
};

}  // namespace qoracle

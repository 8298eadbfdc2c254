#pragma once

// Small fixtures and hand-rolled generators shared by the test executables.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "qoracle/mdp.hpp"
#include "qoracle/table.hpp"

namespace qoracle::testing {

/// s0: a0 stays (r 0), a1 moves to s1 (r 1). s1 absorbing, zero reward.
inline TabularMdp chain_mdp(double gamma = 0.5) {
  std::vector<std::vector<Successor>> kernel{{{0, 1.0}}, {{1, 1.0}}, {{1, 1.0}}, {{1, 1.0}}};
  Table r(2, 2);
  r(0, 1) = 1.0;
  return TabularMdp(2, 2, gamma, kernel, r, {1.0, 0.0}, {false, true});
}

/// One absorbing zero-reward state with n_actions self loops.
inline TabularMdp single_state_mdp(std::size_t n_actions, double gamma, double reward = 0.0, bool terminal = false) {
  std::vector<std::vector<Successor>> kernel(n_actions, {{0, 1.0}});
  Table r(1, n_actions, reward);
  return TabularMdp(1, n_actions, gamma, kernel, r, {1.0}, {terminal});
}

inline Table random_table(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Table t(rows, cols);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline QTable random_q(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return QTable(random_table(rows, cols, rng, lo, hi));
}

/// Strictly positive random rows normalized to one.
inline Policy random_policy(std::size_t rows, std::size_t cols, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Policy pi(rows, cols);
  for (std::size_t s = 0; s < rows; ++s) {
    double z = 0.0;
    for (double& p : pi.row(s)) z += p = u(rng);
    for (double& p : pi.row(s)) p /= z;
  }
  return pi;
}

/// Random dense-ish MDP: each (s,a) gets 1..max_succ distinct successors with random weights.
inline TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, Rng& rng, double gamma = 0.9,
                             std::size_t max_succ = 3) {
  std::uniform_int_distribution<std::size_t> count(1, std::min(max_succ, n_states));
  std::uniform_real_distribution<double> w(0.1, 1.0);
  std::vector<std::vector<Successor>> kernel(n_states * n_actions);
  for (auto& row : kernel) {
    std::vector<std::size_t> all(n_states);
    for (std::size_t i = 0; i < n_states; ++i) all[i] = i;
    std::shuffle(all.begin(), all.end(), rng);
    const std::size_t k = count(rng);
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      row.push_back({all[i], w(rng)});
      z += row.back().prob;
    }
    for (auto& x : row) x.prob /= z;
    // pin the sum at exactly one
    double rest = 1.0;
    for (std::size_t i = 0; i + 1 < row.size(); ++i) rest -= row[i].prob;
    row.back().prob = rest;
  }
  Table r = random_table(n_states, n_actions, rng);
  std::vector<double> init(n_states, 1.0 / static_cast<double>(n_states));
  return TabularMdp(n_states, n_actions, gamma, kernel, r, init);
}

/// Dense P as an (s*n_actions + a) x n_states matrix.
inline std::vector<std::vector<double>> dense_kernel(const TabularMdp& mdp) {
  std::vector<std::vector<double>> p(mdp.n_states() * mdp.n_actions(), std::vector<double>(mdp.n_states(), 0.0));
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a)
      for (const Successor& x : mdp.successors(s, a)) p[s * mdp.n_actions() + a][x.next] += x.prob;
  return p;
}

/// Shortest path length from the start cell to the nearest goal, by BFS over the layout.
inline int bfs_distance(const std::vector<std::string>& layout) {
  const int rows = static_cast<int>(layout.size()), cols = static_cast<int>(layout[0].size());
  std::vector<int> dist(rows * cols, -1);
  std::deque<int> queue;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (layout[r][c] == 'S') {
        dist[r * cols + c] = 0;
        queue.push_back(r * cols + c);
      }
  const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    const int r = cur / cols, c = cur % cols;
    if (layout[r][c] == 'G') return dist[cur];
    for (int k = 0; k < 4; ++k) {
      const int nr = r + dr[k], nc = c + dc[k];
      if (nr < 0 || nc < 0 || nr >= rows || nc >= cols || layout[nr][nc] == '#') continue;
      if (dist[nr * cols + nc] >= 0) continue;
      dist[nr * cols + nc] = dist[cur] + 1;
      queue.push_back(nr * cols + nc);
    }
  }
  return -1;
}

/// Discounted return of one rollout from (s, a) under pi, truncated once gamma^t < 1e-12.
inline double rollout_q(const TabularMdp& mdp, const Policy& pi, std::size_t s, std::size_t a, Rng& rng) {
  double g = 0.0, w = 1.0;
  while (w > 1e-12) {
    const StepResult r = step(mdp, rng, s, a);
    g += w * r.reward;
    if (r.done) break;
    w *= mdp.discount();
    s = r.next_state;
    a = sample_index(pi.row(s), rng);
  }
  return g;
}

}  // namespace qoracle::testing

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qoracle/errors.hpp"

namespace qoracle {

/// Dense row-major state x action table of doubles.
class Table {
 public:
  Table() = default;
  Table(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Table& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Table&, const Table&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// State-action values (Q, Q_pi, Q_*, Q_k).
class QTable : public Table {
 public:
  using Table::Table;
  QTable() = default;
  explicit QTable(Table t) : Table(std::move(t)) {}
};

/// Row-stochastic state x action table.
class Policy : public Table {
 public:
  using Table::Table;
  Policy() = default;
  explicit Policy(Table t) : Table(std::move(t)) {}

  static Policy uniform(std::size_t n_states, std::size_t n_actions) {
    return Policy(n_states, n_actions, 1.0 / static_cast<double>(n_actions));
  }

  /// Throws ValidationError if a row is negative or does not sum to one.
  void validate(double tol = 1e-9) const {
    for (std::size_t s = 0; s < rows(); ++s) {
      double sum = 0.0;
      for (double p : row(s)) {
        if (!(p >= 0.0)) throw ValidationError("policy row " + std::to_string(s) + " has a negative entry");
        sum += p;
      }
      if (std::abs(sum - 1.0) > tol)
        throw ValidationError("policy row " + std::to_string(s) + " sums to " + std::to_string(sum));
    }
  }
};

/// Per-state values (V, v).
using VTable = std::vector<double>;

/// State visitation frequencies, optionally lifted to state-action pairs.
struct VisitTable {
  std::vector<double> state_freq;
  std::optional<Table> state_action_freq;

  /// Number of state-action cells with a nonzero entry (falls back to states).
  std::size_t support() const {
    auto nonzero = [](double v) { return v != 0.0; };
    if (state_action_freq)
      return static_cast<std::size_t>(std::count_if(state_action_freq->values().begin(),
                                                    state_action_freq->values().end(), nonzero));
    return static_cast<std::size_t>(std::count_if(state_freq.begin(), state_freq.end(), nonzero));
  }
};

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < row.size(); ++a)
    if (row[a] > row[best]) best = a;
  return best;
}

inline VTable rowwise_max(const Table& q) {
  VTable out(q.rows());
  for (std::size_t s = 0; s < q.rows(); ++s) out[s] = q(s, argmax(q.row(s)));
  return out;
}

/// One-hot policy on the lowest-index maximizer of each row.
inline Policy greedy_policy(const Table& q) {
  Policy pi(q.rows(), q.cols(), 0.0);
  for (std::size_t s = 0; s < q.rows(); ++s) pi(s, argmax(q.row(s))) = 1.0;
  return pi;
}

inline double sup_norm_diff(const Table& a, const Table& b) {
  if (!a.same_shape(b)) throw DimensionError("sup_norm_diff: shape mismatch");
  double m = 0.0;
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

inline double sup_norm(const Table& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace qoracle

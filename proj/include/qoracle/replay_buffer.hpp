#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "qoracle/errors.hpp"
#include "qoracle/mdp.hpp"

namespace qoracle {

struct Transition {
  std::size_t state = 0;
  std::size_t action = 0;
  double reward = 0.0;
  std::size_t next_state = 0;
  bool terminal = false;  // next_state is a true terminal: do not bootstrap
  bool timeout = false;   // episode cut by the step limit: still bootstrap
};

/// Fixed-capacity FIFO ring of transitions with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ValidationError("replay buffer capacity must be positive");
    ring_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
  }

  void push(const Transition& t) {
    if (ring_.size() < capacity_) {
      ring_.push_back(t);
    } else {
      ring_[head_] = t;
      head_ = (head_ + 1) % capacity_;
    }
    ++inserted_;
  }

  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t inserted() const { return inserted_; }
  bool empty() const { return ring_.empty(); }

  /// i = 0 is the oldest stored transition.
  const Transition& operator[](std::size_t i) const { return ring_[(head_ + i) % ring_.size()]; }

  /// Uniform draw with replacement.
  void sample(std::size_t batch_size, Rng& rng, std::vector<Transition>& out) const {
    if (ring_.empty()) throw EmptyInputError("cannot sample from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, ring_.size() - 1);
    out.clear();
    for (std::size_t i = 0; i < batch_size; ++i) out.push_back(ring_[pick(rng)]);
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // oldest element once the ring is full
  std::size_t inserted_ = 0;
  std::vector<Transition> ring_;
};

}  // namespace qoracle

#pragma once

#include <cstddef>
#include <vector>

#include "aekick/demonstrations.hpp"

namespace aekick {

/// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return size_ == 0; }

  /// i-th oldest stored transition.
  const Transition& at(std::size_t i) const;

  /// Uniform with replacement. Throws ContractError when empty.
  std::vector<Transition> sample(std::size_t batch_size, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> ring_;
  std::size_t cursor_ = 0;  // next write slot
  std::size_t size_ = 0;
};

}  // namespace aekick

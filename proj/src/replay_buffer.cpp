#include "aekick/replay_buffer.hpp"

namespace aekick {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw ContractError("ReplayBuffer: capacity must be >= 1");
  ring_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (ring_.size() < capacity_) {
    ring_.push_back(std::move(t));
  } else {
    ring_[cursor_] = std::move(t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw ContractError("ReplayBuffer::at: index out of range");
  // Once full, the oldest entry sits at the write cursor.
  const std::size_t start = size_ < capacity_ ? 0 : cursor_;
  return ring_[(start + i) % capacity_];
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
  if (size_ == 0) throw ContractError("ReplayBuffer::sample: buffer is empty");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<Transition> out;
  out.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) out.push_back(ring_[pick(rng)]);
  return out;
}

}  // namespace aekick

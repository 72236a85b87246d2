#pragma once

#include <random>
#include <vector>

#include "echo2mri/tensor.hpp"

namespace echo2mri::training {

/// Replay pool of earlier generator outputs shown to the discriminators.
template <typename T>
class HistoryBuffer {
 public:
  explicit HistoryBuffer(std::size_t capacity = 50) : capacity_(capacity) {}

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return items_.size(); }
  const std::vector<Tensor<T>>& items() const noexcept { return items_; }
  std::vector<Tensor<T>>& items() noexcept { return items_; }

  /// Capacity 0 passes `fake` through. Otherwise a fair coin decides: heads
  /// returns `fake` (kept if there is room), tails returns a random stored
  /// element and puts `fake` in its slot. An empty pool always keeps and
  /// returns `fake`.
  template <typename Engine>
  Tensor<T> push_sample(const Tensor<T>& fake, Engine& rng) {
    if (capacity_ == 0) return fake;
    const bool fresh = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
    if (fresh || items_.empty()) {
      if (items_.size() < capacity_) items_.push_back(fake);
      return fake;
    }
    const auto slot = std::uniform_int_distribution<std::size_t>(0, items_.size() - 1)(rng);
    Tensor<T> old = std::move(items_[slot]);
    items_[slot] = fake;
    return old;
  }

 private:
  std::size_t capacity_;
  std::vector<Tensor<T>> items_;
};

}  // namespace echo2mri::training

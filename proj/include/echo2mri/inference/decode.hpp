#pragma once

#include <algorithm>
#include <vector>

#include "echo2mri/dataio/triplets.hpp"
#include "echo2mri/error.hpp"
#include "echo2mri/frame.hpp"

namespace echo2mri::inference {

/// Number of triplets (centres 1..N-2) whose window covers each time step.
inline std::vector<int> contribution_counts(int n) {
  if (n < 3) throw SequenceTooShortError(static_cast<std::size_t>(std::max(n, 0)));
  std::vector<int> counts(n, 0);
  for (int c = 1; c <= n - 2; ++c)
    for (int t = c - 1; t <= c + 1; ++t) ++counts[t];
  return counts;
}

namespace detail {

/// Running sums per time step, fed in ascending centre order so batch and
/// streaming decodes round identically.
class OverlapAccumulator {
 public:
  void add(const dataio::TemporalTriplet& tr) {
    const int c = tr.center_time;
    if (static_cast<int>(sums_.size()) < c + 2) {
      sums_.resize(c + 2);
      counts_.resize(c + 2, 0);
    }
    for (int k = 0; k < 3; ++k) {
      const int t = c - 1 + k;
      const auto& px = tr.channels[k].pixels;
      if (counts_[t] == 0) {
        sums_[t] = px.cast<double>();
      } else {
        if (sums_[t].rows() != px.rows() || sums_[t].cols() != px.cols()) {
          throw ShapeError("temporal_average: triplets differ in frame size");
        }
        sums_[t] += px.cast<double>();
      }
      ++counts_[t];
    }
  }

  Frame take(int t) const {
    Image img = (sums_[t] / static_cast<double>(counts_[t])).cast<float>();
    return {std::move(img), t};
  }

  int count(int t) const { return t < static_cast<int>(counts_.size()) ? counts_[t] : 0; }

 private:
  using Sum = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<Sum> sums_;
  std::vector<int> counts_;
};

}  // namespace detail

/// output[t] = mean over every triplet containing t of its channel at
/// offset t - centre + 1. Boundary frames come from a single triplet.
inline FrameSequence temporal_average(const std::vector<dataio::TemporalTriplet>& translated, int n) {
  if (n < 3) throw SequenceTooShortError(static_cast<std::size_t>(std::max(n, 0)));
  if (static_cast<int>(translated.size()) != n - 2) {
    throw DecodeError("expected " + std::to_string(n - 2) + " triplets for " + std::to_string(n) +
                      " frames, got " + std::to_string(translated.size()));
  }
  std::vector<const dataio::TemporalTriplet*> order;
  for (const auto& tr : translated) order.push_back(&tr);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->center_time < b->center_time; });
  for (int i = 0; i < n - 2; ++i) {
    if (order[i]->center_time != i + 1) {
      throw DecodeError("triplet centres must be exactly 1.." + std::to_string(n - 2));
    }
  }
  detail::OverlapAccumulator acc;
  for (const auto* tr : order) acc.add(*tr);
  FrameSequence out;
  out.reserve(n);
  for (int t = 0; t < n; ++t) out.push_back(acc.take(t));
  return out;
}

}  // namespace echo2mri::inference

#pragma once

#include <array>
#include <vector>

#include "echo2mri/error.hpp"
#include "echo2mri/frame.hpp"
#include "echo2mri/tensor.hpp"

namespace echo2mri::dataio {

/// Frames (t-1, t, t+1) stacked as three channels.
struct TemporalTriplet {
  std::array<Frame, 3> channels;
  int center_time = 0;
};

/// All N-2 triplets of an N-frame sequence, centres 1..N-2 in order.
inline std::vector<TemporalTriplet> make_temporal_triplets(const FrameSequence& seq) {
  if (seq.size() < 3) throw SequenceTooShortError(seq.size());
  std::vector<TemporalTriplet> out;
  out.reserve(seq.size() - 2);
  for (std::size_t t = 1; t + 1 < seq.size(); ++t) {
    out.push_back({{seq[t - 1], seq[t], seq[t + 1]}, static_cast<int>(t)});
  }
  return out;
}

template <typename T = float>
Tensor<T> to_tensor(const TemporalTriplet& tr) {
  const int h = tr.channels[0].height(), w = tr.channels[0].width();
  Tensor<T> t(3, h, w);
  for (int c = 0; c < 3; ++c) {
    const auto& px = tr.channels[c].pixels;
    if (px.rows() != h || px.cols() != w) throw ShapeError("triplet channels differ in size");
    for (Eigen::Index i = 0; i < px.size(); ++i) t.channel(c)[i] = static_cast<T>(px.data()[i]);
  }
  return t;
}

template <typename T>
TemporalTriplet from_tensor(const Tensor<T>& t, int center_time) {
  if (t.channels() != 3) throw ShapeError("triplet tensor must have 3 channels, got " + t.shape().str());
  TemporalTriplet tr;
  tr.center_time = center_time;
  for (int c = 0; c < 3; ++c) {
    Image img(t.height(), t.width());
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(t.channel(c)[i]);
    tr.channels[c] = Frame(std::move(img), center_time - 1 + c);
  }
  return tr;
}

template <typename T = float>
std::vector<Tensor<T>> triplet_tensors(const FrameSequence& seq) {
  std::vector<Tensor<T>> out;
  for (const auto& tr : make_temporal_triplets(seq)) out.push_back(to_tensor<T>(tr));
  return out;
}

}  // namespace echo2mri::dataio

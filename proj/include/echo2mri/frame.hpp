#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <vector>

#include "echo2mri/error.hpp"

namespace echo2mri {

/// Single-channel image, row-major (row = y).
using Image = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Frame {
  Image pixels;
  int time_index = 0;

  Frame() = default;
  Frame(Image p, int t) : pixels(std::move(p)), time_index(t) {}

  int height() const noexcept { return static_cast<int>(pixels.rows()); }
  int width() const noexcept { return static_cast<int>(pixels.cols()); }

  friend bool operator==(const Frame& a, const Frame& b) {
    return a.time_index == b.time_index && a.pixels.rows() == b.pixels.rows() &&
           a.pixels.cols() == b.pixels.cols() && (a.pixels == b.pixels).all();
  }
};

using FrameSequence = std::vector<Frame>;

inline void require_same_size(const Image& a, const Image& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

/// Mean over the (2r+1)^2 window, edges replicated. Summed-area table in double.
inline Image box_mean(const Image& img, int r) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  Image out(h, w);
  if (h == 0 || w == 0) return out;
  const int ph = h + 2 * r, pw = w + 2 * r;
  std::vector<double> sat(static_cast<std::size_t>(ph + 1) * (pw + 1), 0.0);
  auto at = [&](int y, int x) -> double& { return sat[static_cast<std::size_t>(y) * (pw + 1) + x]; };
  for (int y = 0; y < ph; ++y) {
    const int sy = std::clamp(y - r, 0, h - 1);
    double row = 0.0;
    for (int x = 0; x < pw; ++x) {
      row += img(sy, std::clamp(x - r, 0, w - 1));
      at(y + 1, x + 1) = at(y, x + 1) + row;
    }
  }
  const double inv = 1.0 / ((2.0 * r + 1) * (2.0 * r + 1));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int y1 = y + 2 * r + 1, x1 = x + 2 * r + 1;
      out(y, x) = static_cast<float>((at(y1, x1) - at(y, x1) - at(y1, x) + at(y, x)) * inv);
    }
  }
  return out;
}

}  // namespace echo2mri

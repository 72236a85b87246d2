#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstring>

#include "echo2mri/tensor.hpp"

namespace echo2mri::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

enum class PadMode { zero, reflect };

struct Padding {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;

  static Padding uniform(int p) { return {p, p, p, p}; }
  /// Split of a total padding the way "same" convolutions do it: the extra
  /// pixel goes after.
  static Padding same(int kernel) {
    const int total = kernel - 1;
    return {total / 2, total - total / 2, total / 2, total - total / 2};
  }
  friend bool operator==(const Padding&, const Padding&) = default;
};

inline int reflect_index(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

template <typename T>
Tensor<T> pad(const Tensor<T>& x, const Padding& p, PadMode mode) {
  if (p == Padding{}) return x;
  const int h = x.height(), w = x.width();
  if (mode == PadMode::reflect &&
      (std::max(p.top, p.bottom) >= h || std::max(p.left, p.right) >= w)) {
    throw ShapeError("reflection padding larger than input " + x.shape().str());
  }
  Tensor<T> out(x.channels(), h + p.top + p.bottom, w + p.left + p.right);
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      const int sy = y - p.top;
      if (mode == PadMode::zero && (sy < 0 || sy >= h)) continue;
      const int ry = reflect_index(sy, h);
      for (int xo = 0; xo < out.width(); ++xo) {
        const int sx = xo - p.left;
        if (mode == PadMode::zero) {
          if (sx >= 0 && sx < w) out(c, y, xo) = x(c, ry, sx);
        } else {
          out(c, y, xo) = x(c, ry, reflect_index(sx, w));
        }
      }
    }
  }
  return out;
}

/// Adjoint of pad(): folds a gradient on the padded grid back onto the input.
template <typename T>
Tensor<T> unpad_gradient(const Tensor<T>& g, Shape input, const Padding& p, PadMode mode) {
  if (p == Padding{}) return g;
  Tensor<T> out(input);
  const int h = input.height, w = input.width;
  for (int c = 0; c < g.channels(); ++c) {
    for (int y = 0; y < g.height(); ++y) {
      const int sy = y - p.top;
      if (mode == PadMode::zero && (sy < 0 || sy >= h)) continue;
      const int ry = reflect_index(sy, h);
      for (int xo = 0; xo < g.width(); ++xo) {
        const int sx = xo - p.left;
        if (mode == PadMode::zero) {
          if (sx >= 0 && sx < w) out(c, ry, sx) += g(c, y, xo);
        } else {
          out(c, ry, reflect_index(sx, w)) += g(c, y, xo);
        }
      }
    }
  }
  return out;
}

/// Patch matrix for output rows [row0, row1): one row per (channel, ky, kx),
/// one column per output pixel.
template <typename T>
void im2col(const Tensor<T>& src, int kernel, int stride, int out_w, int row0, int row1,
            RowMatrix<T>& cols) {
  const int n = (row1 - row0) * out_w;
  cols.resize(static_cast<Eigen::Index>(src.channels()) * kernel * kernel, n);
  for (int c = 0; c < src.channels(); ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* dst = cols.data() + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * n;
        for (int oy = row0; oy < row1; ++oy) {
          const T* row = &src(c, oy * stride + ky, kx);
          T* d = dst + (oy - row0) * out_w;
          if (stride == 1) {
            std::memcpy(d, row, sizeof(T) * out_w);
          } else {
            for (int ox = 0; ox < out_w; ++ox) d[ox] = row[ox * stride];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col(): scatters-adds patch columns onto `dst`.
template <typename T>
void col2im(const RowMatrix<T>& cols, int kernel, int stride, int out_w, int row0, int row1,
            Tensor<T>& dst) {
  const int n = (row1 - row0) * out_w;
  for (int c = 0; c < dst.channels(); ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* s = cols.data() + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * n;
        for (int oy = row0; oy < row1; ++oy) {
          T* row = &dst(c, oy * stride + ky, kx);
          const T* sr = s + (oy - row0) * out_w;
          for (int ox = 0; ox < out_w; ++ox) row[ox * stride] += sr[ox];
        }
      }
    }
  }
}

/// Output rows per GEMM chunk so the patch matrix stays around `budget` scalars.
inline int rows_per_chunk(int patch_rows, int out_w, int out_h, std::size_t budget = 1u << 22) {
  const std::size_t per_row = static_cast<std::size_t>(patch_rows) * out_w;
  return std::clamp(static_cast<int>(budget / std::max<std::size_t>(per_row, 1)), 1, out_h);
}

}  // namespace echo2mri::nn

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "echo2mri/error.hpp"
#include "echo2mri/frame.hpp"

namespace echo2mri::dataio {

/// Crop box in source pixels and a rotation about the crop centre.
struct AlignmentSpec {
  int x = 0, y = 0, w = 0, h = 0;
  double rotation_deg = 0.0;

  void validate(int frame_w, int frame_h) const {
    if (w <= 0 || h <= 0) throw AlignmentError("crop size must be positive");
    if (x < 0 || y < 0 || x + w > frame_w || y + h > frame_h) {
      throw AlignmentError("crop box (" + std::to_string(x) + ", " + std::to_string(y) + ", " +
                           std::to_string(w) + ", " + std::to_string(h) + ") exceeds frame " +
                           std::to_string(frame_w) + "x" + std::to_string(frame_h));
    }
    if (!std::isfinite(rotation_deg)) throw AlignmentError("rotation must be finite");
  }
};

namespace detail {

/// cos/sin with exact values at multiples of 90 degrees.
inline std::pair<double, double> cos_sin_deg(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0) r += 360.0;
  if (r == 0.0) return {1.0, 0.0};
  if (r == 90.0) return {0.0, 1.0};
  if (r == 180.0) return {-1.0, 0.0};
  if (r == 270.0) return {0.0, -1.0};
  const double rad = r * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

/// Bilinear sample at continuous pixel coordinates (pixel centres at
/// integers); outside samples take the nearest edge value.
inline float bilinear(const Image& img, double sx, double sy) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  sx = std::clamp(sx, 0.0, w - 1.0);
  sy = std::clamp(sy, 0.0, h - 1.0);
  const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = sx - x0, fy = sy - y0;
  if (fx == 0.0 && fy == 0.0) return img(y0, x0);
  const double top = img(y0, x0) * (1 - fx) + img(y0, x1) * fx;
  const double bot = img(y1, x0) * (1 - fx) + img(y1, x1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

/// Rotates the content of the (cx, cy)-centred window counter-clockwise as
/// displayed (y down) and samples it into an out_w x out_h grid.
inline Image rotate_window(const Image& src, double cx, double cy, int out_w, int out_h, double deg) {
  const auto [c, s] = cos_sin_deg(deg);
  Image out(out_h, out_w);
  for (int i = 0; i < out_h; ++i) {
    const double dy = i + 0.5 - out_h / 2.0;
    for (int j = 0; j < out_w; ++j) {
      const double dx = j + 0.5 - out_w / 2.0;
      const double sx = cx + c * dx - s * dy;
      const double sy = cy + s * dx + c * dy;
      out(i, j) = bilinear(src, sx - 0.5, sy - 0.5);
    }
  }
  return out;
}

/// Area-overlap weights mapping `n_in` cells onto `n_out` cells (n_out <= n_in),
/// or bilinear weights with half-pixel centres when enlarging.
inline std::vector<std::vector<std::pair<int, double>>> resample_weights(int n_in, int n_out) {
  std::vector<std::vector<std::pair<int, double>>> w(n_out);
  const double scale = static_cast<double>(n_in) / n_out;
  if (n_out <= n_in) {
    for (int o = 0; o < n_out; ++o) {
      const double lo = o * scale, hi = (o + 1) * scale;
      for (int i = static_cast<int>(std::floor(lo)); i < std::min(n_in, static_cast<int>(std::ceil(hi))); ++i) {
        const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
        if (overlap > 0) w[o].emplace_back(i, overlap / scale);
      }
    }
  } else {
    for (int o = 0; o < n_out; ++o) {
      const double src = std::clamp((o + 0.5) * scale - 0.5, 0.0, n_in - 1.0);
      const int i0 = static_cast<int>(std::floor(src));
      const double f = src - i0;
      w[o].emplace_back(i0, 1.0 - f);
      if (f > 0) w[o].emplace_back(std::min(i0 + 1, n_in - 1), f);
    }
  }
  return w;
}

}  // namespace detail

/// Cuts spec's box out of the frame after rotating the content about the
/// box centre; output is w x h.
inline Frame crop_rotate_align(const Frame& frame, const AlignmentSpec& spec) {
  spec.validate(frame.width(), frame.height());
  const auto [c, s] = detail::cos_sin_deg(spec.rotation_deg);
  if (c == 1.0 && s == 0.0) {
    return {frame.pixels.block(spec.y, spec.x, spec.h, spec.w), frame.time_index};
  }
  return {detail::rotate_window(frame.pixels, spec.x + spec.w / 2.0, spec.y + spec.h / 2.0, spec.w,
                                spec.h, spec.rotation_deg),
          frame.time_index};
}

/// Resamples to size x size (area averaging when shrinking) without changing
/// intensities.
inline Image resize(const Image& img, int size) {
  if (size <= 0) throw InputError("resize target must be positive");
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  if (h == size && w == size) return img;
  const auto wy = detail::resample_weights(h, size);
  const auto wx = detail::resample_weights(w, size);
  Eigen::ArrayXXd tmp(h, size);  // horizontal pass
  for (int y = 0; y < h; ++y) {
    for (int o = 0; o < size; ++o) {
      double acc = 0.0;
      for (const auto& [i, k] : wx[o]) acc += k * img(y, i);
      tmp(y, o) = acc;
    }
  }
  Image out(size, size);
  for (int o = 0; o < size; ++o) {
    for (int x = 0; x < size; ++x) {
      double acc = 0.0;
      for (const auto& [i, k] : wy[o]) acc += k * tmp(i, x);
      out(o, x) = static_cast<float>(acc);
    }
  }
  return out;
}

/// [0, 1] intensities to the network range [-1, 1].
inline Image normalize(const Image& img) { return img * 2.0f - 1.0f; }
inline Image denormalize(const Image& img) { return (img + 1.0f) * 0.5f; }

inline Frame resize_normalize(const Frame& frame, int size) {
  return {normalize(resize(frame.pixels, size)), frame.time_index};
}

inline Frame normalize(const Frame& frame) { return {normalize(frame.pixels), frame.time_index}; }
inline Frame denormalize(const Frame& frame) { return {denormalize(frame.pixels), frame.time_index}; }

inline FrameSequence normalize(const FrameSequence& seq) {
  FrameSequence out;
  out.reserve(seq.size());
  for (const auto& f : seq) out.push_back(normalize(f));
  return out;
}

inline FrameSequence denormalize(const FrameSequence& seq) {
  FrameSequence out;
  out.reserve(seq.size());
  for (const auto& f : seq) out.push_back(denormalize(f));
  return out;
}

struct AugmentConfig {
  double flip_probability = 0.5;
  double max_rotation_deg = 10.0;
};

/// One augmentation draw; applied identically to every frame of a sequence
/// so temporal neighbours stay registered.
struct AugmentDraw {
  bool flip = false;
  double rotation_deg = 0.0;
};

/// Always consumes exactly two variates.
template <typename Engine>
AugmentDraw draw_augment(Engine& rng, const AugmentConfig& cfg = {}) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentDraw d;
  d.flip = unit(rng) < cfg.flip_probability;
  d.rotation_deg = (2.0 * unit(rng) - 1.0) * cfg.max_rotation_deg;
  return d;
}

inline Frame apply_augment(const Frame& frame, const AugmentDraw& d) {
  Image img = d.flip ? Image(frame.pixels.rowwise().reverse()) : frame.pixels;
  if (d.rotation_deg != 0.0) {
    img = detail::rotate_window(img, img.cols() / 2.0, img.rows() / 2.0, static_cast<int>(img.cols()),
                                static_cast<int>(img.rows()), d.rotation_deg);
  }
  return {std::move(img), frame.time_index};
}

/// Random horizontal flip (probability cfg.flip_probability) and rotation
/// uniform in +-cfg.max_rotation_deg about the centre.
template <typename Engine>
Frame augment(const Frame& frame, Engine& rng, const AugmentConfig& cfg = {}) {
  return apply_augment(frame, draw_augment(rng, cfg));
}

template <typename Engine>
FrameSequence augment_sequence(const FrameSequence& seq, Engine& rng, const AugmentConfig& cfg = {}) {
  const AugmentDraw d = draw_augment(rng, cfg);
  FrameSequence out;
  out.reserve(seq.size());
  for (const auto& f : seq) out.push_back(apply_augment(f, d));
  return out;
}

}  // namespace echo2mri::dataio

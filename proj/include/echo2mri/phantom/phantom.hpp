#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <json.hpp>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "echo2mri/error.hpp"
#include "echo2mri/frame.hpp"

// Synthetic apical 4-chamber cartoon. Coordinates are normalized: u to the
// right, v downwards, both in [0, 1]; the probe apex sits at the top centre.

namespace echo2mri::phantom {

using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ArtifactLevels {
  double speckle = 0.0;
  double saturation = 0.0;
  double out_of_view = 0.0;
  double low_contrast = 0.0;

  friend bool operator==(const ArtifactLevels&, const ArtifactLevels&) = default;
};

struct PhantomConfig {
  std::uint64_t seed = 0;
  int num_frames = 16;
  int image_size = 256;
  int cycle_period = 16;
  ArtifactLevels artifact_levels{0.5, 0.5, 0.3, 0.4};

  void validate() const {
    if (num_frames < 3) throw ConfigError("num_frames", "must be >= 3");
    if (image_size < 8) throw ConfigError("image_size", "must be >= 8");
    if (cycle_period < 2) throw ConfigError("cycle_period", "must be >= 2");
    const auto& a = artifact_levels;
    const std::pair<const char*, double> levels[] = {{"artifact_levels.speckle", a.speckle},
                                                     {"artifact_levels.saturation", a.saturation},
                                                     {"artifact_levels.out_of_view", a.out_of_view},
                                                     {"artifact_levels.low_contrast", a.low_contrast}};
    for (const auto& [name, v] : levels) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(name, "must be in [0, 1]");
    }
  }

  friend bool operator==(const PhantomConfig&, const PhantomConfig&) = default;
};

struct Ellipse {
  double cx, cy, a, b;

  /// Normalized radius: < 1 inside, 1 on the boundary.
  double radius(double u, double v) const {
    const double du = (u - cx) / a, dv = (v - cy) / b;
    return std::sqrt(du * du + dv * dv);
  }

  Ellipse scaled(double s, double grow = 0.0) const { return {cx, cy, a * s + grow, b * s + grow}; }
};

struct Anatomy {
  Ellipse body;
  Ellipse lv, rv, la, ra;  ///< blood pools at rest
  double wall;             ///< myocardial thickness at rest
  double contraction;      ///< fractional ventricular shrink at peak systole
  double phase;            ///< phase offset, radians
  double background, tissue, myocardium, blood;
};

/// Circular sector anchored at the apex; angle 0 points straight down,
/// positive towards +u.
struct Wedge {
  double apex_u = 0.5, apex_v = 0.0;
  double theta_min = 0.0, theta_max = 0.0;
  double radius = 0.0;
  bool active = false;

  static double angle(double u, double v, double au, double av) { return std::atan2(u - au, v - av); }

  bool contains(double u, double v) const {
    if (!active) return false;
    const double th = angle(u, v, apex_u, apex_v);
    return th >= theta_min && th <= theta_max && std::hypot(u - apex_u, v - apex_v) <= radius;
  }
};

struct PhantomPair {
  FrameSequence clean;      ///< MRI-like target domain
  FrameSequence corrupted;  ///< echo-like source domain
  std::vector<Mask> ground_truth_masks;  ///< out-of-view pixels per frame
  std::vector<Mask> lv_wall_masks;
  Wedge wedge;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id,
                    0x9e37u};
  return std::mt19937_64(seq);
}

inline double pixel_center(int i, int size) { return (i + 0.5) / size; }

/// Anti-aliased coverage of an ellipse from its normalized radius.
inline double coverage(const Ellipse& e, double u, double v, int size) {
  const double px = (1.0 - e.radius(u, v)) * std::min(e.a, e.b) * size;
  return std::clamp(px + 0.5, 0.0, 1.0);
}

inline float quantize16(double v) {
  const auto k = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
  return static_cast<float>(k) / 65535.0f;
}

}  // namespace detail

/// Per-seed anatomy; all jitter comes from one dedicated stream.
inline Anatomy phantom_anatomy(std::uint64_t seed) {
  auto rng = detail::stream(seed, 0);
  std::uniform_real_distribution<double> j(-1.0, 1.0);
  auto jit = [&](double base, double amount) { return base + amount * j(rng); };
  Anatomy a;
  a.body = {0.5, 0.55, jit(0.44, 0.02), jit(0.47, 0.02)};
  a.lv = {jit(0.61, 0.02), jit(0.37, 0.02), jit(0.11, 0.01), jit(0.21, 0.015)};
  a.rv = {jit(0.37, 0.02), jit(0.40, 0.02), jit(0.09, 0.01), jit(0.18, 0.015)};
  a.la = {jit(0.61, 0.02), jit(0.76, 0.015), jit(0.10, 0.01), jit(0.09, 0.01)};
  a.ra = {jit(0.37, 0.02), jit(0.76, 0.015), jit(0.09, 0.01), jit(0.09, 0.01)};
  a.wall = jit(0.04, 0.005);
  a.contraction = jit(0.18, 0.03);
  a.phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  a.background = jit(0.06, 0.02);
  a.tissue = jit(0.25, 0.03);
  a.myocardium = jit(0.38, 0.03);
  a.blood = jit(0.85, 0.04);
  return a;
}

/// 0 at end-diastole (rest), 1 at peak systole.
inline double systole(const Anatomy& a, int t, int period) {
  return 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / period + a.phase);
}

struct Chambers {
  Ellipse lv, rv, la, ra;
  double wall_lv, wall_rv, wall_atria;
};

inline Chambers chambers_at(const Anatomy& a, double s) {
  const double vs = 1.0 - a.contraction * s;
  const double as = 1.0 + 0.6 * a.contraction * s;
  const double thick = a.wall * (1.0 + 0.5 * s);
  return {a.lv.scaled(vs), a.rv.scaled(vs), a.la.scaled(as), a.ra.scaled(as), thick, 0.7 * thick,
          0.5 * a.wall};
}

inline Image render_clean(const Anatomy& a, double s, int size) {
  const auto c = chambers_at(a, s);
  Image img(size, size);
  for (int y = 0; y < size; ++y) {
    const double v = detail::pixel_center(y, size);
    for (int x = 0; x < size; ++x) {
      const double u = detail::pixel_center(x, size);
      auto mix = [](double base, double top, double w) { return base + (top - base) * w; };
      double p = mix(a.background, a.tissue, detail::coverage(a.body, u, v, size));
      const std::pair<const Ellipse*, double> layers[] = {
          {&c.la, c.wall_atria}, {&c.ra, c.wall_atria}, {&c.rv, c.wall_rv}, {&c.lv, c.wall_lv}};
      for (const auto& [e, wall] : layers) {
        p = mix(p, a.myocardium, detail::coverage(e->scaled(1.0, wall), u, v, size));
      }
      for (const auto& [e, wall] : layers) p = mix(p, a.blood, detail::coverage(*e, u, v, size));
      img(y, x) = static_cast<float>(p);
    }
  }
  return img;
}

/// Pixels between the LV blood pool and the outer LV wall.
inline Mask lv_wall_mask(const Anatomy& a, double s, int size) {
  const auto c = chambers_at(a, s);
  const Ellipse outer = c.lv.scaled(1.0, c.wall_lv);
  Mask m(size, size);
  for (int y = 0; y < size; ++y) {
    const double v = detail::pixel_center(y, size);
    for (int x = 0; x < size; ++x) {
      const double u = detail::pixel_center(x, size);
      m(y, x) = outer.radius(u, v) <= 1.0 && c.lv.radius(u, v) > 1.0;
    }
  }
  return m;
}

/// Sector covering the lateral `level` fraction of the resting LV wall.
inline Wedge oov_wedge(const Anatomy& a, double level, int size) {
  Wedge w;
  if (level <= 0.0) return w;
  const Mask wall = lv_wall_mask(a, 0.0, size);
  std::vector<double> angles;
  double reach = 0.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!wall(y, x)) continue;
      const double u = detail::pixel_center(x, size), v = detail::pixel_center(y, size);
      angles.push_back(Wedge::angle(u, v, w.apex_u, w.apex_v));
      reach = std::max(reach, std::hypot(u - w.apex_u, v - w.apex_v));
    }
  }
  if (angles.empty()) return w;
  std::sort(angles.begin(), angles.end(), std::greater<>());
  const auto k = static_cast<std::size_t>(std::lround(level * angles.size()));
  if (k == 0) return w;
  w.active = true;
  w.theta_min = k >= angles.size() ? angles.back() - 1e-9 : 0.5 * (angles[k - 1] + angles[k]);
  w.theta_max = angles.front() + 0.05;
  w.radius = reach * 1.1;
  return w;
}

/// Corrupts one clean frame in place, in the fixed order: contrast
/// compression, multiplicative speckle, saturated band, out-of-view wedge.
template <typename Engine>
void corrupt_frame(Image& img, const ArtifactLevels& lv, const Wedge& wedge, double band_center,
                   Engine& speckle_rng) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  if (lv.low_contrast > 0.0) {
    constexpr double kPivot = 0.3;
    const double k = 1.0 - 0.8 * lv.low_contrast;
    for (auto& p : img.reshaped()) p = static_cast<float>(kPivot + (p - kPivot) * k);
  }
  // Draw the noise field even at level 0 so other artifacts see the same
  // stream position regardless of this level.
  std::normal_distribution<double> z(0.0, 1.0);
  const double sigma = 0.6 * lv.speckle;
  for (auto& p : img.reshaped()) {
    const double n = z(speckle_rng);
    if (sigma > 0.0) p = static_cast<float>(std::min(1.0, p * std::exp(sigma * n - 0.5 * sigma * sigma)));
  }
  if (lv.saturation > 0.0) {
    constexpr double kWidth = 0.05;
    const double amp = 0.9 * lv.saturation;
    for (int y = 0; y < h; ++y) {
      const double d = (detail::pixel_center(y, h) - band_center) / kWidth;
      const double add = amp * std::exp(-0.5 * d * d);
      for (int x = 0; x < w; ++x) img(y, x) = static_cast<float>(std::min(1.0, img(y, x) + add));
    }
  }
  if (wedge.active) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (wedge.contains(detail::pixel_center(x, w), detail::pixel_center(y, h))) img(y, x) = 0.0f;
      }
    }
  }
}

/// Deterministic in (config): same config gives bit-identical output.
inline PhantomPair generate_phantom_pair(const PhantomConfig& cfg) {
  cfg.validate();
  const Anatomy a = phantom_anatomy(cfg.seed);
  const int n = cfg.image_size;
  PhantomPair out;
  out.wedge = oov_wedge(a, cfg.artifact_levels.out_of_view, n);
  auto band_rng = detail::stream(cfg.seed, 2);
  const double band_center = std::uniform_real_distribution<double>(0.2, 0.35)(band_rng);
  auto speckle_rng = detail::stream(cfg.seed, 1);

  Mask oov(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      oov(y, x) = out.wedge.contains(detail::pixel_center(x, n), detail::pixel_center(y, n));

  for (int t = 0; t < cfg.num_frames; ++t) {
    const double s = systole(a, t, cfg.cycle_period);
    Image clean = render_clean(a, s, n);
    for (auto& p : clean.reshaped()) p = detail::quantize16(p);
    Image dirty = clean;
    corrupt_frame(dirty, cfg.artifact_levels, out.wedge, band_center, speckle_rng);
    for (auto& p : dirty.reshaped()) p = detail::quantize16(p);
    out.clean.emplace_back(std::move(clean), t);
    out.corrupted.emplace_back(std::move(dirty), t);
    out.ground_truth_masks.push_back(oov);
    out.lv_wall_masks.push_back(lv_wall_mask(a, s, n));
  }
  return out;
}

inline void to_json(nlohmann::json& j, const ArtifactLevels& l) {
  j = {{"speckle", l.speckle},
       {"saturation", l.saturation},
       {"out_of_view", l.out_of_view},
       {"low_contrast", l.low_contrast}};
}

inline void from_json(const nlohmann::json& j, ArtifactLevels& l) {
  l.speckle = j.value("speckle", 0.0);
  l.saturation = j.value("saturation", 0.0);
  l.out_of_view = j.value("out_of_view", 0.0);
  l.low_contrast = j.value("low_contrast", 0.0);
}

inline void to_json(nlohmann::json& j, const PhantomConfig& c) {
  j = {{"seed", c.seed},
       {"num_frames", c.num_frames},
       {"image_size", c.image_size},
       {"cycle_period", c.cycle_period},
       {"artifact_levels", c.artifact_levels}};
}

inline void from_json(const nlohmann::json& j, PhantomConfig& c) {
  const PhantomConfig d;
  c.seed = j.value("seed", d.seed);
  c.num_frames = j.value("num_frames", d.num_frames);
  c.image_size = j.value("image_size", d.image_size);
  c.cycle_period = j.value("cycle_period", d.cycle_period);
  c.artifact_levels = j.contains("artifact_levels") ? j.at("artifact_levels").get<ArtifactLevels>()
                                                    : d.artifact_levels;
}

inline void to_json(nlohmann::json& j, const Wedge& w) {
  j = {{"active", w.active},       {"apex", {w.apex_u, w.apex_v}}, {"theta_min", w.theta_min},
       {"theta_max", w.theta_max}, {"radius", w.radius}};
}

}  // namespace echo2mri::phantom

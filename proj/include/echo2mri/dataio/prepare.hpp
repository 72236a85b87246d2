#pragma once

#include <cstdio>
#include <json.hpp>
#include <optional>
#include <random>
#include <vector>

#include "echo2mri/dataio/sequence.hpp"
#include "echo2mri/dataio/transforms.hpp"
#include "echo2mri/dataio/triplets.hpp"

namespace echo2mri::dataio {

struct PrepareOptions {
  int size = 256;
  std::optional<AlignmentSpec> align;
  bool augment = false;
  AugmentConfig augment_config;
};

struct PreparedSequence {
  FrameSequence frames;  ///< [0, 1] intensities, size x size
  std::optional<AugmentDraw> draw;
};

/// Align, resize and (optionally) augment every frame. Output stays in
/// [0, 1] so it can be stored losslessly; normalize() happens at load.
template <typename Engine>
PreparedSequence prepare_sequence(const FrameSequence& seq, const PrepareOptions& opt, Engine& rng) {
  if (opt.size < 1) throw InputError("size must be >= 1");
  PreparedSequence out;
  std::optional<AugmentDraw> draw;
  if (opt.augment) draw = draw_augment(rng, opt.augment_config);
  for (const auto& f : seq) {
    Frame g = opt.align ? crop_rotate_align(f, *opt.align) : f;
    g.pixels = resize(g.pixels, opt.size);
    if (draw) g = apply_augment(g, *draw);
    g.pixels = g.pixels.cwiseMax(0.0f).cwiseMin(1.0f);
    out.frames.push_back(std::move(g));
  }
  out.draw = draw;
  return out;
}

inline nlohmann::json to_json_value(const PrepareOptions& o, const std::optional<AugmentDraw>& d) {
  nlohmann::json j = {{"size", o.size}, {"augment", o.augment}};
  if (o.align) {
    j["align"] = {{"x", o.align->x}, {"y", o.align->y}, {"w", o.align->w}, {"h", o.align->h},
                  {"rotation_deg", o.align->rotation_deg}};
  }
  if (d) j["augment_draw"] = {{"flip", d->flip}, {"rotation_deg", d->rotation_deg}};
  return j;
}

/// Parses "x,y,w,h,deg".
inline AlignmentSpec parse_alignment(const std::string& s) {
  AlignmentSpec a;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%d,%d,%d,%d,%lf%c", &a.x, &a.y, &a.w, &a.h, &a.rotation_deg, &tail) != 5) {
    throw AlignmentError("alignment must be x,y,w,h,deg, got '" + s + "'");
  }
  return a;
}

/// Every sequence under `root`, checked to be size x size.
inline std::vector<std::pair<SequenceSource, FrameSequence>> load_dataset(const std::filesystem::path& root,
                                                                          int size) {
  std::vector<std::pair<SequenceSource, FrameSequence>> out;
  for (const auto& src : discover_sequences(root)) {
    FrameSequence seq = extract_frames(src.path);
    if (seq.front().height() != size || seq.front().width() != size) {
      throw ShapeError(src.path.string() + ": frames are " + std::to_string(seq.front().width()) + "x" +
                       std::to_string(seq.front().height()) + ", expected " + std::to_string(size) + "x" +
                       std::to_string(size) + " (run prepare --size " + std::to_string(size) + ")");
    }
    out.emplace_back(src, std::move(seq));
  }
  return out;
}

/// Normalized triplets from every sequence under `root`.
template <typename T = float>
std::vector<Tensor<T>> dataset_triplets(const std::filesystem::path& root, int size) {
  std::vector<Tensor<T>> out;
  for (const auto& [src, seq] : load_dataset(root, size)) {
    for (auto& t : triplet_tensors<T>(normalize(seq))) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace echo2mri::dataio

#pragma once

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "echo2mri/frame.hpp"

namespace echo2mri::phantom {

/// Severity of each artifact class in `frame` relative to a clean
/// `reference`; all zero when the two are equal. Intensities in [0, 1].
struct ArtifactScores {
  double speckle = 0.0;       ///< RMS of the high-pass part of (frame - reference)
  double saturation = 0.0;    ///< mean brightening above 0.5, weighted by how bright
  double out_of_view = 0.0;   ///< mean local dropout below half the reference signal
  double low_contrast = 0.0;  ///< 1 - regression slope of frame on reference, floored at 0
};

inline ArtifactScores artifact_score(const Image& frame, const Image& reference) {
  require_same_size(frame, reference, "artifact_score");
  ArtifactScores s;
  const auto n = static_cast<double>(frame.size());
  if (n == 0) return s;

  // Local means suppress zero-mean speckle before judging dropout and glare.
  const Image f5 = box_mean(frame, 2);
  const Image r5 = box_mean(reference, 2);
  double oov = 0.0, sat = 0.0;
  long covered = 0;
  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    const double f = f5.data()[i], r = r5.data()[i];
    if (r > 0.05) {
      oov += std::clamp(1.0 - f / (0.5 * r), 0.0, 1.0);
      ++covered;
    }
    sat += std::max(0.0, f - r) * std::clamp((f - 0.5) / 0.4, 0.0, 1.0);
  }
  s.out_of_view = covered ? oov / covered : 0.0;
  s.saturation = sat / n;

  const Image diff = frame - reference;
  const Image high = diff - box_mean(diff, 1);
  s.speckle = std::sqrt(high.cast<double>().square().sum() / n);

  const double mf = frame.cast<double>().mean(), mr = reference.cast<double>().mean();
  const double cov = ((frame.cast<double>() - mf) * (reference.cast<double>() - mr)).sum();
  const double var = (reference.cast<double>() - mr).square().sum();
  if (var > 0.0) s.low_contrast = std::max(0.0, 1.0 - cov / var);
  return s;
}

inline void to_json(nlohmann::json& j, const ArtifactScores& s) {
  j = {{"speckle", s.speckle},
       {"saturation", s.saturation},
       {"out_of_view", s.out_of_view},
       {"low_contrast", s.low_contrast}};
}

}  // namespace echo2mri::phantom

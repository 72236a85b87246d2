#pragma once

#include <cstdio>
#include <filesystem>
#include <json.hpp>

#include "echo2mri/dataio/image_io.hpp"
#include "echo2mri/dataio/sequence.hpp"
#include "echo2mri/phantom/artifact_score.hpp"
#include "echo2mri/phantom/phantom.hpp"

namespace echo2mri::phantom {

/// Layout:
///   DIR/manifest.json        echo-domain manifest over corrupted/ plus the
///                            generating config and per-frame ground truth
///   DIR/corrupted/           echo-like frames (+ manifest.json)
///   DIR/clean/               MRI-like frames (+ manifest.json)
///   DIR/masks/oov_NNNN.png   out-of-view masks
inline void write_phantom(const std::filesystem::path& dir, const PhantomConfig& cfg, const PhantomPair& pair) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "masks");
  dataio::Manifest clean = dataio::write_sequence(dir / "clean", pair.clean, "mri");
  dataio::Manifest echo = dataio::write_sequence(dir / "corrupted", pair.corrupted, "echo");

  dataio::Manifest top;
  top.domain = "echo";
  std::vector<std::pair<int, int>> pairing;
  nlohmann::json truth = nlohmann::json::array();
  for (std::size_t t = 0; t < pair.corrupted.size(); ++t) {
    top.frames.push_back("corrupted/" + echo.frames[t]);
    pairing.emplace_back(static_cast<int>(t), static_cast<int>(t));
    char name[32];
    std::snprintf(name, sizeof name, "oov_%04zu.png", t);
    const Mask& m = pair.ground_truth_masks[t];
    dataio::write_image(dir / "masks" / name, m.cast<float>());
    long wall = 0, hidden = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (pair.lv_wall_masks[t].data()[i]) {
        ++wall;
        hidden += m.data()[i] != 0;
      }
    }
    truth.push_back({{"time_index", static_cast<int>(t)},
                     {"oov_mask", std::string("masks/") + name},
                     {"oov_pixels", static_cast<long>(m.cast<long>().sum())},
                     {"lv_wall_pixels", wall},
                     {"lv_wall_hidden_fraction", wall ? static_cast<double>(hidden) / wall : 0.0},
                     {"scores", artifact_score(pair.corrupted[t].pixels, pair.clean[t].pixels)}});
  }
  top.pairing = pairing;
  top.extra = {{"generator", "phantom"},
               {"config", cfg},
               {"wedge", pair.wedge},
               {"clean_manifest", "clean/manifest.json"},
               {"ground_truth", truth}};
  dataio::write_manifest(dir / dataio::kManifestName, top);
}

}  // namespace echo2mri::phantom

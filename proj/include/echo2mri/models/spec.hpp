#pragma once

#include <json.hpp>
#include <string>

#include "echo2mri/error.hpp"

namespace echo2mri::models {

/// Declarative description of the ResNet translation generator.
struct GeneratorSpec {
  int input_channels = 3;
  int base_width = 64;
  int n_res_blocks = 9;
  int image_size = 256;

  void validate() const {
    if (input_channels != 3) throw ConfigError("input_channels", "must be 3 (temporal triplet)");
    if (base_width < 1) throw ConfigError("base_width", "must be >= 1");
    if (n_res_blocks < 1) throw ConfigError("n_res_blocks", "must be >= 1");
    if (image_size < 8 || image_size % 4 != 0) {
      throw ConfigError("image_size", "must be a multiple of 4 and at least 8, got " +
                                          std::to_string(image_size));
    }
  }
  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

/// Declarative description of the five-layer patch discriminator.
struct DiscriminatorSpec {
  int input_channels = 3;
  int base_width = 64;
  int n_layers = 5;
  int image_size = 256;

  /// Side of the decision grid: three stride-2 stages, then two stride-1.
  int output_grid() const noexcept { return image_size / 8; }

  void validate() const {
    if (input_channels != 3) throw ConfigError("input_channels", "must be 3 (temporal triplet)");
    if (base_width < 1) throw ConfigError("base_width", "must be >= 1");
    if (n_layers != 5) throw ConfigError("n_layers", "the discriminator has exactly 5 layers");
    if (image_size < 8 || image_size % 8 != 0) {
      throw ConfigError("image_size", "must be a multiple of 8, got " + std::to_string(image_size));
    }
  }
  friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;
};

inline void to_json(nlohmann::json& j, const GeneratorSpec& s) {
  j = {{"input_channels", s.input_channels}, {"base_width", s.base_width},
       {"n_res_blocks", s.n_res_blocks},     {"image_size", s.image_size},
       {"norm", "instance"},                 {"activation", "relu"},
       {"final_activation", "tanh"}};
}

inline void from_json(const nlohmann::json& j, GeneratorSpec& s) {
  s.input_channels = j.value("input_channels", 3);
  s.base_width = j.value("base_width", 64);
  s.n_res_blocks = j.value("n_res_blocks", 9);
  s.image_size = j.value("image_size", 256);
}

inline void to_json(nlohmann::json& j, const DiscriminatorSpec& s) {
  j = {{"input_channels", s.input_channels},
       {"base_width", s.base_width},
       {"n_layers", s.n_layers},
       {"image_size", s.image_size},
       {"norm", "instance"},
       {"activation", "leaky_relu"},
       {"leaky_slope", 0.2},
       {"output_grid", s.output_grid()}};
}

inline void from_json(const nlohmann::json& j, DiscriminatorSpec& s) {
  s.input_channels = j.value("input_channels", 3);
  s.base_width = j.value("base_width", 64);
  s.n_layers = j.value("n_layers", 5);
  s.image_size = j.value("image_size", 256);
}

}  // namespace echo2mri::models

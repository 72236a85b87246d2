#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <string>

#include "echo2mri/error.hpp"
#include "echo2mri/models/spec.hpp"

namespace echo2mri::training {

/// Optimization recipe. Defaults reproduce the published setup: 200 epochs,
/// linear decay to zero after epoch 100, Adam(0.5, 0.999) at 2e-4, batch 1,
/// cycle weight 10.
struct TrainConfig {
  int epochs = 200;
  int decay_start_epoch = 100;
  double lr0 = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 1;
  double lambda = 10.0;
  int history_buffer_size = 50;
  /// Discriminators see history-buffer samples (true) or the fresh fakes.
  bool buffered_fakes = true;
  std::uint64_t seed = 0;
  int image_size = 256;
  int base_width = 64;
  int n_res_blocks = 9;
  int checkpoint_every = 10;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
    if (decay_start_epoch <= 0 || decay_start_epoch > epochs) {
      throw ConfigError("decay_start_epoch", "must satisfy 0 < decay_start_epoch <= epochs");
    }
    if (!(lr0 > 0.0)) throw ConfigError("lr0", "must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must be in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps", "must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("lambda", "must be >= 0");
    if (history_buffer_size < 0) throw ConfigError("history_buffer_size", "must be >= 0");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every", "must be >= 1");
    generator_spec().validate();
    discriminator_spec().validate();
  }

  models::GeneratorSpec generator_spec() const { return {3, base_width, n_res_blocks, image_size}; }
  models::DiscriminatorSpec discriminator_spec() const { return {3, base_width, 5, image_size}; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Learning rate for a 1-based epoch: constant lr0 up to decay_start_epoch,
/// then lr0 * (epochs - epoch) / (epochs - decay_start_epoch).
inline double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 1 || epoch > cfg.epochs) {
    throw ScheduleError("epoch " + std::to_string(epoch) + " outside [1, " +
                        std::to_string(cfg.epochs) + "]");
  }
  if (epoch <= cfg.decay_start_epoch) return cfg.lr0;
  return cfg.lr0 * static_cast<double>(cfg.epochs - epoch) /
         static_cast<double>(cfg.epochs - cfg.decay_start_epoch);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"decay_start_epoch", c.decay_start_epoch},
       {"lr0", c.lr0},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"batch_size", c.batch_size},
       {"lambda", c.lambda},
       {"history_buffer_size", c.history_buffer_size},
       {"buffered_fakes", c.buffered_fakes},
       {"seed", c.seed},
       {"image_size", c.image_size},
       {"base_width", c.base_width},
       {"n_res_blocks", c.n_res_blocks},
       {"checkpoint_every", c.checkpoint_every}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const char* known[] = {"epochs", "decay_start_epoch", "lr0", "beta1", "beta2",
                                "adam_eps", "batch_size", "lambda", "history_buffer_size",
                                "buffered_fakes", "seed", "image_size", "base_width",
                                "n_res_blocks", "checkpoint_every"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ConfigError(key, "unknown training configuration key");
    }
  }
  const TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.decay_start_epoch = j.value("decay_start_epoch", d.decay_start_epoch);
  c.lr0 = j.value("lr0", d.lr0);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lambda = j.value("lambda", d.lambda);
  c.history_buffer_size = j.value("history_buffer_size", d.history_buffer_size);
  c.buffered_fakes = j.value("buffered_fakes", d.buffered_fakes);
  c.seed = j.value("seed", d.seed);
  c.image_size = j.value("image_size", d.image_size);
  c.base_width = j.value("base_width", d.base_width);
  c.n_res_blocks = j.value("n_res_blocks", d.n_res_blocks);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", std::string("malformed JSON: ") + e.what());
  }
  TrainConfig cfg = j.get<TrainConfig>();
  cfg.validate();
  return cfg;
}

}  // namespace echo2mri::training

#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "echo2mri/losses/losses.hpp"
#include "echo2mri/models/blob.hpp"
#include "echo2mri/models/networks.hpp"
#include "echo2mri/training/adam.hpp"
#include "echo2mri/training/config.hpp"
#include "echo2mri/training/history_buffer.hpp"

namespace echo2mri::training {

/// A step produced a non-finite loss. No weights were updated by that step.
class DivergenceError : public NumericError {
 public:
  explicit DivergenceError(const losses::LossReport& report)
      : NumericError("training diverged at step " + std::to_string(report.step) +
                     " (non-finite loss)"),
        report_(report) {}
  const losses::LossReport& report() const noexcept { return report_; }

 private:
  losses::LossReport report_;
};

/// Everything needed to continue training bit-for-bit: weights, optimizer
/// moments, replay pools, counters and the sampling RNG.
template <typename T>
struct TrainState {
  TrainConfig config;
  models::ModelBundle<T> bundle;
  Adam<T> opt_generators;  // G and F share one objective and one optimizer
  Adam<T> opt_dx;
  Adam<T> opt_dy;
  HistoryBuffer<T> fake_x_pool;
  HistoryBuffer<T> fake_y_pool;
  std::mt19937_64 rng;
  int epoch = 0;  ///< completed epochs
  long step = 0;  ///< completed steps
  double learning_rate = 0.0;

  explicit TrainState(const TrainConfig& cfg)
      : config((cfg.validate(), cfg)),
        bundle(cfg.generator_spec(), cfg.discriminator_spec()),
        fake_x_pool(static_cast<std::size_t>(cfg.history_buffer_size)),
        fake_y_pool(static_cast<std::size_t>(cfg.history_buffer_size)),
        rng(cfg.seed ^ 0x9E3779B97F4A7C15ull),
        learning_rate(cfg.lr0) {
    bundle.initialize(cfg.seed);
    rebuild_optimizers();
  }

  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

 private:
  void rebuild_optimizers() {
    auto gf = bundle.G.parameters();
    auto f = bundle.F.parameters();
    gf.insert(gf.end(), f.begin(), f.end());
    opt_generators = Adam<T>(gf, config.beta1, config.beta2, config.adam_eps);
    opt_dx = Adam<T>(bundle.D_X.parameters(), config.beta1, config.beta2, config.adam_eps);
    opt_dy = Adam<T>(bundle.D_Y.parameters(), config.beta1, config.beta2, config.adam_eps);
  }
};

namespace detail {

template <typename T>
std::vector<models::NamedArray<T>> to_arrays(const nn::ParameterList<T>& params) {
  std::vector<models::NamedArray<T>> out;
  for (const auto* p : params) out.push_back({p->name, p->dims, p->value});
  return out;
}

template <typename T>
void from_arrays(const nn::ParameterList<T>& params, const std::vector<models::NamedArray<T>>& arrays,
                 const std::string& what) {
  if (arrays.size() != params.size()) {
    throw Error(what + ": expected " + std::to_string(params.size()) + " arrays, found " +
                std::to_string(arrays.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (arrays[i].name != params[i]->name || arrays[i].values.size() != params[i]->size()) {
      throw Error(what + ": array '" + arrays[i].name + "' does not match parameter '" +
                  params[i]->name + "'");
    }
    params[i]->value = arrays[i].values;
  }
}

template <typename T>
std::vector<models::NamedArray<T>> moments_to_arrays(const Adam<T>& opt) {
  std::vector<models::NamedArray<T>> out;
  const auto& params = opt.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({params[i]->name + ".m", params[i]->dims, opt.moments()[i].m});
    out.push_back({params[i]->name + ".v", params[i]->dims, opt.moments()[i].v});
  }
  return out;
}

template <typename T>
void moments_from_arrays(Adam<T>& opt, const std::vector<models::NamedArray<T>>& arrays) {
  if (arrays.size() != 2 * opt.moments().size()) throw Error("optimizer state does not match model");
  for (std::size_t i = 0; i < opt.moments().size(); ++i) {
    opt.moments()[i].m = arrays[2 * i].values;
    opt.moments()[i].v = arrays[2 * i + 1].values;
  }
}

template <typename T>
std::vector<models::NamedArray<T>> pool_to_arrays(const HistoryBuffer<T>& pool) {
  std::vector<models::NamedArray<T>> out;
  for (const auto& t : pool.items()) {
    out.push_back({"item", {t.channels(), t.height(), t.width()},
                   std::vector<T>(t.values().begin(), t.values().end())});
  }
  return out;
}

template <typename T>
void pool_from_arrays(HistoryBuffer<T>& pool, const std::vector<models::NamedArray<T>>& arrays) {
  pool.items().clear();
  for (const auto& a : arrays) {
    if (a.dims.size() != 3) throw Error("malformed replay pool entry");
    Tensor<T> t(a.dims[0], a.dims[1], a.dims[2]);
    std::copy(a.values.begin(), a.values.end(), t.data());
    pool.items().push_back(std::move(t));
  }
}

inline nlohmann::json optimizer_json(double beta1, double beta2, double eps, long steps,
                                     const std::string& blob) {
  return {{"type", "adam"}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps},
          {"steps", steps}, {"moments", blob}};
}

}  // namespace detail

inline constexpr int kCheckpointFormatVersion = 1;

/// Writes `state` into `dir` (created if needed): G.bin, F.bin, D_X.bin,
/// D_Y.bin, optimizer and replay-pool blobs, and checkpoint.json.
template <typename T>
void save_checkpoint(TrainState<T>& state, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto& b = state.bundle;
  models::write_blob(dir / "G.bin", detail::to_arrays(b.G.parameters()));
  models::write_blob(dir / "F.bin", detail::to_arrays(b.F.parameters()));
  models::write_blob(dir / "D_X.bin", detail::to_arrays(b.D_X.parameters()));
  models::write_blob(dir / "D_Y.bin", detail::to_arrays(b.D_Y.parameters()));
  models::write_blob(dir / "optimizer_GF.bin", detail::moments_to_arrays(state.opt_generators));
  models::write_blob(dir / "optimizer_D_X.bin", detail::moments_to_arrays(state.opt_dx));
  models::write_blob(dir / "optimizer_D_Y.bin", detail::moments_to_arrays(state.opt_dy));
  models::write_blob(dir / "pool_fake_x.bin", detail::pool_to_arrays(state.fake_x_pool));
  models::write_blob(dir / "pool_fake_y.bin", detail::pool_to_arrays(state.fake_y_pool));
  std::ostringstream rng;
  rng << state.rng;
  const auto& c = state.config;
  nlohmann::json j = {
      {"format_version", kCheckpointFormatVersion},
      {"scalar_bytes", sizeof(T)},
      {"generator_spec", b.G.spec()},
      {"discriminator_spec", b.D_X.spec()},
      {"train_config", c},
      {"epoch", state.epoch},
      {"step", state.step},
      {"learning_rate", state.learning_rate},
      {"rng_state", rng.str()},
      {"weights", {{"G", "G.bin"}, {"F", "F.bin"}, {"D_X", "D_X.bin"}, {"D_Y", "D_Y.bin"}}},
      {"optimizers",
       {{"GF", detail::optimizer_json(c.beta1, c.beta2, c.adam_eps, state.opt_generators.steps(),
                                      "optimizer_GF.bin")},
        {"D_X", detail::optimizer_json(c.beta1, c.beta2, c.adam_eps, state.opt_dx.steps(),
                                       "optimizer_D_X.bin")},
        {"D_Y", detail::optimizer_json(c.beta1, c.beta2, c.adam_eps, state.opt_dy.steps(),
                                       "optimizer_D_Y.bin")}}},
      {"history_pools", {{"fake_x", "pool_fake_x.bin"}, {"fake_y", "pool_fake_y.bin"}}}};
  const auto tmp = dir / "checkpoint.json.tmp";
  {
    std::ofstream out(tmp);
    out << j.dump(2) << "\n";
    if (!out) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, dir / "checkpoint.json");
}

inline nlohmann::json read_checkpoint_sidecar(const std::filesystem::path& dir) {
  std::ifstream in(dir / "checkpoint.json");
  if (!in) throw Error("no checkpoint.json in " + dir.string());
  nlohmann::json j;
  in >> j;
  if (j.value("format_version", 0) != kCheckpointFormatVersion) {
    throw Error("unsupported checkpoint format in " + dir.string());
  }
  return j;
}

/// Restores a full training state saved by save_checkpoint().
template <typename T>
std::unique_ptr<TrainState<T>> load_checkpoint(const std::filesystem::path& dir) {
  const auto j = read_checkpoint_sidecar(dir);
  auto state = std::make_unique<TrainState<T>>(j.at("train_config").get<TrainConfig>());
  auto& b = state->bundle;
  detail::from_arrays(b.G.parameters(), models::read_blob<T>(dir / "G.bin"), "G");
  detail::from_arrays(b.F.parameters(), models::read_blob<T>(dir / "F.bin"), "F");
  detail::from_arrays(b.D_X.parameters(), models::read_blob<T>(dir / "D_X.bin"), "D_X");
  detail::from_arrays(b.D_Y.parameters(), models::read_blob<T>(dir / "D_Y.bin"), "D_Y");
  detail::moments_from_arrays(state->opt_generators, models::read_blob<T>(dir / "optimizer_GF.bin"));
  detail::moments_from_arrays(state->opt_dx, models::read_blob<T>(dir / "optimizer_D_X.bin"));
  detail::moments_from_arrays(state->opt_dy, models::read_blob<T>(dir / "optimizer_D_Y.bin"));
  state->opt_generators.set_steps(j.at("optimizers").at("GF").at("steps").get<long>());
  state->opt_dx.set_steps(j.at("optimizers").at("D_X").at("steps").get<long>());
  state->opt_dy.set_steps(j.at("optimizers").at("D_Y").at("steps").get<long>());
  detail::pool_from_arrays(state->fake_x_pool, models::read_blob<T>(dir / "pool_fake_x.bin"));
  detail::pool_from_arrays(state->fake_y_pool, models::read_blob<T>(dir / "pool_fake_y.bin"));
  std::istringstream rng(j.at("rng_state").get<std::string>());
  rng >> state->rng;
  state->epoch = j.at("epoch").get<int>();
  state->step = j.at("step").get<long>();
  state->learning_rate = j.at("learning_rate").get<double>();
  return state;
}

/// Loads one generator ("G" or "F") for inference.
template <typename T>
models::Generator<T> load_generator(const std::filesystem::path& dir, const std::string& which = "G") {
  const auto j = read_checkpoint_sidecar(dir);
  models::Generator<T> g(j.at("generator_spec").get<models::GeneratorSpec>(), which);
  detail::from_arrays(g.parameters(), models::read_blob<T>(dir / (which + ".bin")), which);
  return g;
}

}  // namespace echo2mri::training

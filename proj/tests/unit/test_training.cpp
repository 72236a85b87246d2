#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "echo2mri/training/trainer.hpp"
#include "gradcheck.hpp"

using namespace echo2mri;
using namespace echo2mri::training;
using echo2mri::testing::random_tensor;

namespace {

TrainConfig tiny_config(std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.image_size = 16;
  cfg.base_width = 2;
  cfg.n_res_blocks = 1;
  cfg.seed = seed;
  cfg.history_buffer_size = 4;
  return cfg;
}

std::vector<Tensor<float>> random_pool(int n, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor<float>> out;
  for (int i = 0; i < n; ++i) out.push_back(random_tensor<float>({3, size, size}, rng));
  return out;
}

std::vector<float> flatten(const nn::ParameterList<float>& params) {
  std::vector<float> out;
  for (const auto* p : params) out.insert(out.end(), p->value.begin(), p->value.end());
  return out;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("echo2mri_" + name + "_" +
                                                             std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(LrSchedule, PublishedRecipePoints) {
  const TrainConfig cfg;
  EXPECT_DOUBLE_EQ(lr_schedule(1, cfg), 2e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(100, cfg), 2e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(150, cfg), 1e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(101, cfg), 2e-4 * 99.0 / 100.0);
}

TEST(LrSchedule, NonIncreasingNonNegativeAndContinuous) {
  const TrainConfig cfg;
  double prev = lr_schedule(1, cfg);
  for (int e = 2; e <= cfg.epochs; ++e) {
    const double lr = lr_schedule(e, cfg);
    EXPECT_LE(lr, prev) << e;
    EXPECT_GE(lr, 0.0) << e;
    EXPECT_LE(prev - lr, cfg.lr0 / (cfg.epochs - cfg.decay_start_epoch) + 1e-18) << e;
    prev = lr;
  }
}

TEST(LrSchedule, OutOfRangeEpochRaises) {
  const TrainConfig cfg;
  EXPECT_THROW(lr_schedule(0, cfg), ScheduleError);
  EXPECT_THROW(lr_schedule(201, cfg), ScheduleError);
}

TEST(TrainConfig, ValidationNamesTheField) {
  TrainConfig cfg;
  cfg.decay_start_epoch = 300;
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "decay_start_epoch");
  }
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr0 = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TrainConfig, JsonRoundTripAndUnknownKeys) {
  TrainConfig cfg = tiny_config(42);
  EXPECT_EQ(nlohmann::json(cfg).get<TrainConfig>(), cfg);
  nlohmann::json j = cfg;
  j["learning_rate"] = 1.0;
  EXPECT_THROW(j.get<TrainConfig>(), ConfigError);
}

TEST(HistoryBuffer, CapacityZeroPassesThrough) {
  HistoryBuffer<float> pool(0);
  std::mt19937_64 rng(1);
  Tensor<float> a(1, 1, 1);
  for (int i = 0; i < 20; ++i) {
    a[0] = static_cast<float>(i);
    EXPECT_EQ(pool.push_sample(a, rng)[0], static_cast<float>(i));
  }
  EXPECT_EQ(pool.size(), 0u);
}

TEST(HistoryBuffer, CapacityOneHoldsTheOther) {
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    HistoryBuffer<float> pool(1);
    std::mt19937_64 rng(seed);
    Tensor<float> a(1, 1, 1), b(1, 1, 1);
    a[0] = 1.0f;
    b[0] = 2.0f;
    EXPECT_EQ(pool.push_sample(a, rng)[0], 1.0f);
    const float second = pool.push_sample(b, rng)[0];
    ASSERT_EQ(pool.size(), 1u);
    const float held = pool.items()[0][0];
    EXPECT_TRUE((second == 1.0f && held == 2.0f) || (second == 2.0f && held == 1.0f));
  }
}

TEST(HistoryBuffer, FreshFractionNearHalf) {
  HistoryBuffer<float> pool(50);
  std::mt19937_64 rng(77);
  Tensor<float> t(1, 1, 1);
  int fresh = 0, counted = 0;
  for (int i = 0; i < 10'000 + 50; ++i) {
    t[0] = static_cast<float>(i);
    const float out = pool.push_sample(t, rng)[0];
    if (i >= 50) {
      ++counted;
      fresh += out == t[0];
    }
  }
  EXPECT_NEAR(static_cast<double>(fresh) / counted, 0.5, 0.02);
}

TEST(TrainStep, ZeroLearningRateLeavesWeightsUnchanged) {
  TrainState<float> s(tiny_config());
  s.learning_rate = 0.0;
  const auto before_g = flatten(s.bundle.G.parameters());
  const auto before_d = flatten(s.bundle.D_X.parameters());
  const auto xs = random_pool(1, 16, 3), ys = random_pool(1, 16, 4);
  const auto r = train_step(s, xs[0], ys[0]);
  EXPECT_EQ(flatten(s.bundle.G.parameters()), before_g);
  EXPECT_EQ(flatten(s.bundle.D_X.parameters()), before_d);
  EXPECT_GT(r.cyc, 0.0);
  EXPECT_GT(r.d1, 0.0);
  EXPECT_TRUE(r.recomposes());
  EXPECT_EQ(s.step, 1);
}

TEST(TrainStep, EveryNetworkChangesAfterAStep) {
  TrainState<float> s(tiny_config());
  auto& b = s.bundle;
  const auto g = flatten(b.G.parameters()), f = flatten(b.F.parameters());
  const auto dx = flatten(b.D_X.parameters()), dy = flatten(b.D_Y.parameters());
  const auto xs = random_pool(1, 16, 3), ys = random_pool(1, 16, 4);
  train_step(s, xs[0], ys[0]);
  EXPECT_NE(flatten(b.G.parameters()), g);
  EXPECT_NE(flatten(b.F.parameters()), f);
  EXPECT_NE(flatten(b.D_X.parameters()), dx);
  EXPECT_NE(flatten(b.D_Y.parameters()), dy);
}

TEST(TrainStep, SameSeedSameDataSameReports) {
  const auto xs = random_pool(4, 16, 3), ys = random_pool(4, 16, 4);
  Trainer<float> a(tiny_config(5), xs, ys), b(tiny_config(5), xs, ys);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(a.step(), b.step()) << i;
}

TEST(TrainStep, MismatchedBatchRaises) {
  TrainState<float> s(tiny_config());
  const auto xs = random_pool(2, 16, 3), ys = random_pool(1, 16, 4);
  EXPECT_THROW(train_step(s, std::span<const Tensor<float>>(xs), std::span<const Tensor<float>>(ys)),
               InputError);
}

TEST(TrainStep, NonFiniteInputRaisesDivergenceWithoutUpdating) {
  TrainState<float> s(tiny_config());
  auto xs = random_pool(1, 16, 3);
  const auto ys = random_pool(1, 16, 4);
  xs[0][5] = std::numeric_limits<float>::quiet_NaN();
  const auto before = flatten(s.bundle.G.parameters());
  EXPECT_THROW(train_step(s, xs[0], ys[0]), DivergenceError);
  EXPECT_EQ(flatten(s.bundle.G.parameters()), before);
  EXPECT_EQ(s.step, 0);
}

TEST(TrainStep, BatchOfTwoRuns) {
  auto cfg = tiny_config();
  cfg.batch_size = 2;
  const auto xs = random_pool(4, 16, 3), ys = random_pool(4, 16, 4);
  Trainer<float> t(cfg, xs, ys);
  EXPECT_EQ(t.steps_per_epoch(), 2);
  EXPECT_TRUE(t.step().finite());
}

TEST(Trainer, OneEpochOnThreePlusThreeLogsThreeSteps) {
  auto cfg = tiny_config();
  cfg.epochs = 1;
  cfg.decay_start_epoch = 1;
  const auto dir = scratch_dir("epoch");
  Trainer<float> t(cfg, random_pool(3, 16, 3), random_pool(3, 16, 4));
  t.set_run_directory(dir);
  int seen = 0;
  t.on_report([&](const losses::LossReport&) { ++seen; });
  t.run();
  EXPECT_EQ(seen, 3);
  std::ifstream log(dir / "losses.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) {
    const auto r = nlohmann::json::parse(line).get<losses::LossReport>();
    EXPECT_EQ(r.step, ++lines);
  }
  EXPECT_EQ(lines, 3);
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoints" / "epoch_0001" / "checkpoint.json"));
  EXPECT_EQ(latest_checkpoint(dir), dir / "checkpoints" / "epoch_0001");
  std::filesystem::remove_all(dir);
}

TEST(Trainer, ResumeReproducesUninterruptedRun) {
  auto cfg = tiny_config(9);
  cfg.epochs = 4;
  cfg.decay_start_epoch = 2;
  cfg.checkpoint_every = 2;
  const auto xs = random_pool(3, 16, 3), ys = random_pool(3, 16, 4);

  std::vector<losses::LossReport> full;
  const auto dir = scratch_dir("resume");
  {
    Trainer<float> t(cfg, xs, ys);
    t.set_run_directory(dir);
    t.on_report([&](const losses::LossReport& r) { full.push_back(r); });
    t.run();
  }
  std::vector<losses::LossReport> resumed;
  Trainer<float> t(load_checkpoint<float>(dir / "checkpoints" / "epoch_0002"), xs, ys);
  EXPECT_EQ(t.state().epoch, 2);
  t.on_report([&](const losses::LossReport& r) { resumed.push_back(r); });
  t.run();
  ASSERT_EQ(full.size(), 12u);
  ASSERT_EQ(resumed.size(), 6u);
  for (std::size_t i = 0; i < resumed.size(); ++i) EXPECT_EQ(resumed[i], full[6 + i]) << i;
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, GeneratorLoadsForInference) {
  const auto dir = scratch_dir("ckpt");
  TrainState<float> s(tiny_config(4));
  save_checkpoint(s, dir);
  auto g = load_generator<float>(dir, "G");
  EXPECT_EQ(flatten(g.parameters()),
            flatten(s.bundle.G.parameters()));
  const auto sidecar = read_checkpoint_sidecar(dir);
  EXPECT_EQ(sidecar.at("format_version"), 1);
  EXPECT_EQ(sidecar.at("generator_spec").get<models::GeneratorSpec>(), s.bundle.G.spec());
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, DoubleBlobsLoadIntoFloat) {
  const auto dir = scratch_dir("widen");
  TrainState<double> s(tiny_config(4));
  save_checkpoint(s, dir);
  const auto restored = load_checkpoint<float>(dir);
  const auto a = s.bundle.F.parameters();
  const auto b = restored->bundle.F.parameters();
  for (std::size_t p = 0; p < a.size(); ++p)
    for (std::size_t i = 0; i < a[p]->size(); ++i)
      ASSERT_EQ(b[p]->value[i], static_cast<float>(a[p]->value[i]));
  std::filesystem::remove_all(dir);
}

namespace {

// Checks "required", "const" and "enum" recursively; enough for the sidecar.
void conforms(const nlohmann::json& value, const nlohmann::json& schema, const std::string& at) {
  if (schema.contains("const")) EXPECT_EQ(value, schema["const"]) << at;
  if (schema.contains("enum")) {
    const auto& e = schema["enum"];
    EXPECT_NE(std::find(e.begin(), e.end(), value), e.end()) << at;
  }
  for (const auto& key : schema.value("required", nlohmann::json::array())) {
    EXPECT_TRUE(value.contains(key.get<std::string>())) << at << "." << key;
  }
  if (schema.contains("properties")) {
    for (const auto& [k, sub] : schema["properties"].items()) {
      if (value.contains(k)) conforms(value[k], sub, at + "." + k);
    }
  }
  if (schema.contains("additionalProperties") && schema["additionalProperties"].is_object() && value.is_object()) {
    for (const auto& [k, v] : value.items()) {
      if (!schema.value("properties", nlohmann::json::object()).contains(k))
        conforms(v, schema["additionalProperties"], at + "." + k);
    }
  }
}

}  // namespace

TEST(Checkpoint, SidecarMatchesDocumentedSchema) {
  const auto dir = scratch_dir("schema");
  TrainState<float> s(tiny_config(2));
  save_checkpoint(s, dir);
  std::ifstream in(std::string(ECHO2MRI_DOCS_DIR) + "/checkpoint.schema.json");
  ASSERT_TRUE(in);
  const auto schema = nlohmann::json::parse(in);
  const auto sidecar = read_checkpoint_sidecar(dir);
  conforms(sidecar, schema, "checkpoint");
  for (const auto& [name, file] : sidecar["weights"].items()) EXPECT_TRUE(std::filesystem::exists(dir / file)) << name;
  for (const auto& [name, opt] : sidecar["optimizers"].items())
    EXPECT_TRUE(std::filesystem::exists(dir / opt["moments"].get<std::string>())) << name;
  for (const auto& [name, file] : sidecar["history_pools"].items())
    EXPECT_TRUE(std::filesystem::exists(dir / file)) << name;
  std::filesystem::remove_all(dir);
}

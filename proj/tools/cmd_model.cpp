#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "commands.hpp"
#include "echo2mri/dataio/prepare.hpp"
#include "echo2mri/inference/translate.hpp"
#include "echo2mri/training/trainer.hpp"

namespace echo2mri::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Only the CPU backend exists; anything else is refused rather than ignored.
std::string select_device() {
  const char* env = std::getenv("ECHO2MRI_DEVICE");
  const std::string dev = env ? env : "cpu";
  if (dev != "cpu") throw ConfigError("ECHO2MRI_DEVICE", "'" + dev + "' is not available; this build supports cpu");
  return dev;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  return json::parse(in);
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << j.dump(2) << "\n";
  if (!out) throw Error("cannot write " + p.string());
}

}  // namespace

void add_train(CLI::App& app) {
  struct Opts {
    std::string config, echo, mri, out;
    bool dry_run = false, resume = false;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("train", "Train the cycle-consistent translator on unpaired echo and MRI data");
  cmd->add_option("--config", o->config, "Training configuration JSON (defaults for omitted fields)");
  cmd->add_option("--echo", o->echo, "Prepared echo dataset")->required();
  cmd->add_option("--mri", o->mri, "Prepared MRI dataset")->required();
  cmd->add_option("--out", o->out, "Run directory");
  cmd->add_flag("--dry-run", o->dry_run, "Print the resolved configuration and data summary, write nothing");
  cmd->add_flag("--resume", o->resume, "Continue from the latest checkpoint in --out");
  cmd->callback([o] {
    training::TrainConfig cfg;
    if (!o->config.empty()) cfg = training::load_train_config(o->config);
    cfg.validate();
    const auto device = select_device();
    auto echo = dataio::dataset_triplets<float>(o->echo, cfg.image_size);
    auto mri = dataio::dataset_triplets<float>(o->mri, cfg.image_size);
    if (echo.empty() || mri.empty()) throw InputError("both datasets need sequences of at least 3 frames");

    const json lock = {{"train_config", cfg},
                       {"generator_spec", cfg.generator_spec()},
                       {"discriminator_spec", cfg.discriminator_spec()},
                       {"data",
                        {{"echo", fs::absolute(o->echo).lexically_normal().string()},
                         {"mri", fs::absolute(o->mri).lexically_normal().string()},
                         {"echo_triplets", echo.size()},
                         {"mri_triplets", mri.size()}}},
                       {"device", device},
                       {"scalar", "float32"}};
    if (o->dry_run) {
      std::cout << lock.dump(2) << "\n";
      return;
    }
    if (o->out.empty()) throw ConfigError("out", "a run directory is required unless --dry-run");
    const fs::path run = o->out;
    const auto lock_path = run / "config.lock.json";

    std::unique_ptr<training::TrainState<float>> state;
    if (fs::exists(lock_path)) {
      if (!o->resume) throw ConfigError("out", run.string() + " already holds a run; pass --resume to continue it");
      const auto prev = read_json(lock_path);
      for (const char* key : {"train_config", "data"}) {
        if (prev.at(key) != lock.at(key)) {
          throw ConfigError(key, "differs from " + lock_path.string() + "; resume needs the same config and data");
        }
      }
      if (const auto ckpt = training::latest_checkpoint(run)) {
        state = training::load_checkpoint<float>(*ckpt);
        std::cerr << "resuming from " << ckpt->string() << " (epoch " << state->epoch << ")\n";
      }
    } else {
      if (o->resume) throw ConfigError("out", "nothing to resume in " + run.string());
      write_json(lock_path, lock);
    }
    if (!state) state = std::make_unique<training::TrainState<float>>(cfg);

    training::Trainer<float> trainer(std::move(state), std::move(echo), std::move(mri));
    trainer.set_run_directory(run);
    const long spe = trainer.steps_per_epoch();
    struct Sums {
      double adv = 0, cyc = 0, d1 = 0, d2 = 0;
      long n = 0;
    };
    auto sums = std::make_shared<Sums>();
    auto t0 = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
    const int total_epochs = cfg.epochs;
    trainer.on_report([sums, t0, spe, total_epochs](const losses::LossReport& r) {
      sums->adv += r.adv_G + r.adv_F;
      sums->cyc += r.cyc;
      sums->d1 += r.d1;
      sums->d2 += r.d2;
      ++sums->n;
      if (r.step % spe != 0) return;
      const auto now = std::chrono::steady_clock::now();
      const double secs = std::chrono::duration<double>(now - *t0).count();
      const double n = static_cast<double>(sums->n);
      std::fprintf(stderr, "epoch %d/%d  adv %.4f  cyc %.4f  d1 %.4f  d2 %.4f  (%ld steps, %.1fs)\n",
                   static_cast<int>((r.step + spe - 1) / spe), total_epochs, sums->adv / n, sums->cyc / n,
                   sums->d1 / n, sums->d2 / n, sums->n, secs);
      *sums = Sums{};
      *t0 = now;
    });
    trainer.run();
    if (const auto last = training::latest_checkpoint(run)) std::cout << "checkpoint " << last->string() << "\n";
  });
}

namespace {

fs::path resolve_checkpoint(const fs::path& p) {
  if (fs::exists(p / "checkpoint.json")) return p;
  if (const auto latest = training::latest_checkpoint(p)) return *latest;
  throw Error("no checkpoint found at " + p.string());
}

FrameSequence clamp01(FrameSequence seq) {
  for (auto& f : seq) f.pixels = f.pixels.cwiseMax(0.0f).cwiseMin(1.0f);
  return seq;
}

}  // namespace

void add_translate(CLI::App& app) {
  struct Opts {
    std::string checkpoint, in, out, generator = "G";
    bool stream = false;
    int bench = 0;
    double source_fps = 0.0;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("translate", "Translate echo sequences into synthetic MRI views");
  cmd->add_option("--checkpoint", o->checkpoint, "Checkpoint directory, or a run directory (latest checkpoint)")
      ->required();
  cmd->add_option("--in", o->in, "Input sequence or dataset directory")->required();
  cmd->add_option("--out", o->out, "Output directory (mirrors the input layout)")->required();
  cmd->add_flag("--stream", o->stream, "Frame-by-frame streaming decode");
  cmd->add_option("--bench", o->bench, "Timed repeats per sequence after one warm-up pass")->capture_default_str();
  cmd->add_option("--source-fps", o->source_fps, "Acquisition frame rate, for real-time comparison");
  cmd->add_option("--generator", o->generator, "G (echo->MRI) or F (MRI->echo)")
      ->check(CLI::IsMember({"G", "F"}))
      ->capture_default_str();
  cmd->callback([o] {
    select_device();
    const auto ckpt = resolve_checkpoint(o->checkpoint);
    const auto gen = training::load_generator<float>(ckpt, o->generator);
    const int size = gen.spec().image_size;
    const std::string out_domain = o->generator == "G" ? "mri" : "echo";

    json per_sequence = json::array();
    double total_seconds = 0.0;
    long total_frames = 0;
    std::vector<double> push_seconds;
    for (const auto& [src, raw] : dataio::load_dataset(o->in, size)) {
      const auto input = dataio::normalize(raw);
      FrameSequence out;
      json entry = {{"sequence", src.relative.empty() ? "." : src.relative.string()}, {"frames", input.size()}};
      if (o->stream) {
        inference::StreamingTranslator st(gen);
        const auto start = std::chrono::steady_clock::now();
        for (const auto& f : input) {
          const auto a = std::chrono::steady_clock::now();
          for (auto& r : st.push(f)) out.push_back(std::move(r));
          push_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - a).count());
        }
        for (auto& r : st.finish()) out.push_back(std::move(r));
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        entry["timing"] = {{"total_seconds", secs}, {"seconds_per_frame", secs / input.size()}};
        total_seconds += secs;
      } else {
        auto res = inference::translate_sequence(input, gen);
        out = std::move(res.frames);
        entry["timing"] = res.timing;
        total_seconds += res.timing.total_seconds;
      }
      total_frames += static_cast<long>(input.size());
      if (o->bench > 0) entry["benchmark"] = inference::benchmark_throughput(input, gen, o->bench);

      const auto dir = src.relative.empty() ? fs::path(o->out) : fs::path(o->out) / src.relative;
      dataio::write_sequence_named(dir, clamp01(dataio::denormalize(out)), out_domain,
                                   dataio::frame_names(src.path, raw.size()),
                                   {{"translated_from", src.path.string()},
                                    {"checkpoint", ckpt.string()},
                                    {"generator", o->generator}});
      std::cout << "translated " << src.path.string() << " -> " << dir.string() << " (" << raw.size()
                << " frames)\n";
      per_sequence.push_back(std::move(entry));
    }

    json timing = {{"mode", o->stream ? "stream" : "batch"},
                   {"checkpoint", ckpt.string()},
                   {"generator", o->generator},
                   {"sequences", per_sequence},
                   {"overall",
                    {{"frames", total_frames},
                     {"total_seconds", total_seconds},
                     {"seconds_per_frame", total_frames ? total_seconds / total_frames : 0.0},
                     {"fps", total_seconds > 0 ? total_frames / total_seconds : 0.0}}}};
    if (o->stream && !push_seconds.empty()) {
      // Frame t's last window is centred on t+1, so it waits for frame t+2.
      const auto s = inference::summarize(push_seconds, static_cast<int>(total_frames));
      json lat = {{"lookahead_frames", 2},
                  {"compute_mean_seconds", s.mean},
                  {"compute_p95_seconds", s.p95}};
      if (o->source_fps > 0) lat["total_mean_seconds"] = 2.0 / o->source_fps + s.mean;
      timing["streaming_latency"] = lat;
    }
    if (o->source_fps > 0) {
      const double fps = timing["overall"]["fps"].get<double>();
      timing["source_fps"] = o->source_fps;
      timing["real_time"] = fps >= o->source_fps;
    }
    write_json(fs::path(o->out) / "timing.json", timing);
    std::cerr << "overall " << timing["overall"]["fps"].get<double>() << " frames/s\n";
  });
}

}  // namespace echo2mri::cli

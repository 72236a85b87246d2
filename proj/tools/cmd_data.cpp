#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "commands.hpp"
#include "echo2mri/dataio/prepare.hpp"
#include "echo2mri/phantom/writer.hpp"

namespace echo2mri::cli {

namespace {

/// "speckle=0.5,oov=0.3"; omitted keys keep their defaults.
phantom::ArtifactLevels parse_levels(const std::string& text, phantom::ArtifactLevels levels) {
  std::map<std::string, double*> keys = {{"speckle", &levels.speckle},
                                         {"saturation", &levels.saturation},
                                         {"oov", &levels.out_of_view},
                                         {"out_of_view", &levels.out_of_view},
                                         {"loc", &levels.low_contrast},
                                         {"low_contrast", &levels.low_contrast}};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("levels", "expected key=value, got '" + item + "'");
    const auto key = item.substr(0, eq);
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError("levels", "unknown artifact '" + key + "'");
    try {
      std::size_t used = 0;
      *it->second = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("levels", "bad number in '" + item + "'");
    }
  }
  return levels;
}

}  // namespace

void add_phantom(CLI::App& app) {
  struct Opts {
    std::uint64_t seed = 0;
    int frames = 16, size = 256, period = 16, count = 1;
    std::string levels, out;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("phantom", "Generate a synthetic echo/MRI phantom sequence pair");
  cmd->add_option("--seed", o->seed, "Random seed")->capture_default_str();
  cmd->add_option("--frames", o->frames, "Frames per sequence")->capture_default_str();
  cmd->add_option("--size", o->size, "Frame side in pixels")->capture_default_str();
  cmd->add_option("--period", o->period, "Cardiac cycle length in frames")->capture_default_str();
  cmd->add_option("--levels", o->levels, "Artifact levels, e.g. speckle=0.5,saturation=0.5,oov=0.3,loc=0.4");
  cmd->add_option("--count", o->count, "Number of sequences (seeds seed..seed+count-1)")->capture_default_str();
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->callback([o] {
    if (o->count < 1) throw ConfigError("count", "must be >= 1");
    for (int k = 0; k < o->count; ++k) {
      phantom::PhantomConfig cfg;
      cfg.seed = o->seed + static_cast<std::uint64_t>(k);
      cfg.num_frames = o->frames;
      cfg.image_size = o->size;
      cfg.cycle_period = o->period;
      cfg.artifact_levels = parse_levels(o->levels, cfg.artifact_levels);
      const auto pair = phantom::generate_phantom_pair(cfg);
      std::filesystem::path dir = o->out;
      if (o->count > 1) dir /= "seq_" + std::to_string(cfg.seed);
      phantom::write_phantom(dir, cfg, pair);
      std::cout << "wrote " << dir.string() << " (" << cfg.num_frames << " frames, " << cfg.image_size << "px)\n";
    }
  });
}

void add_prepare(CLI::App& app) {
  struct Opts {
    std::string in, out, align, domain;
    int size = 256;
    bool augment = false;
    std::uint64_t seed = 0;
    double max_rotation = 10.0, flip_probability = 0.5;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("prepare", "Crop/rotate-align, resize and optionally augment frame sequences");
  cmd->add_option("--in", o->in, "Input sequence or dataset directory")->required();
  cmd->add_option("--out", o->out, "Output directory (mirrors the input layout)")->required();
  cmd->add_option("--size", o->size, "Output frame side")->capture_default_str();
  cmd->add_option("--align", o->align, "Crop box and rotation: x,y,w,h,deg");
  cmd->add_flag("--augment", o->augment, "Random flip and rotation, one draw per sequence");
  cmd->add_option("--seed", o->seed, "Augmentation seed")->capture_default_str();
  cmd->add_option("--max-rotation", o->max_rotation, "Augmentation rotation range in degrees (+-)")
      ->capture_default_str();
  cmd->add_option("--flip-probability", o->flip_probability, "Augmentation flip probability")->capture_default_str();
  cmd->add_option("--domain", o->domain, "Domain tag for the output manifests (default: from input, else echo)");
  cmd->callback([o] {
    dataio::PrepareOptions opt;
    opt.size = o->size;
    if (!o->align.empty()) opt.align = dataio::parse_alignment(o->align);
    opt.augment = o->augment;
    opt.augment_config = {o->flip_probability, o->max_rotation};
    std::mt19937_64 rng(o->seed);
    for (const auto& src : dataio::discover_sequences(o->in)) {
      const auto seq = dataio::extract_frames(src.path);
      const auto prepared = dataio::prepare_sequence(seq, opt, rng);
      std::string domain = o->domain;
      std::optional<std::vector<std::pair<int, int>>> pairing;
      const auto manifest = std::filesystem::is_directory(src.path) ? src.path / dataio::kManifestName : src.path;
      if (std::filesystem::exists(manifest) && manifest.extension() == ".json") {
        const auto m = dataio::read_manifest(manifest);
        if (domain.empty()) domain = m.domain;
        pairing = m.pairing;
      }
      if (domain.empty()) domain = "echo";
      const std::filesystem::path out = o->out;
      const auto dir = src.relative.empty() ? out : out / src.relative;
      auto written = dataio::write_sequence_named(
          dir, prepared.frames, domain, dataio::frame_names(src.path, seq.size()),
          {{"prepared", dataio::to_json_value(opt, prepared.draw)}, {"source", src.path.string()}});
      if (pairing) {
        written.pairing = pairing;
        dataio::write_manifest(dir / dataio::kManifestName, written);
      }
      std::cout << "prepared " << src.path.string() << " -> " << dir.string() << " (" << seq.size() << " frames)\n";
    }
  });
}

}  // namespace echo2mri::cli

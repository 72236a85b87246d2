#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "echo2mri/dataio/image_io.hpp"
#include "echo2mri/error.hpp"
#include "echo2mri/frame.hpp"

#if defined(ECHO2MRI_HAVE_OPENCV)
#include <opencv2/core.hpp>
#include <opencv2/videoio.hpp>
#endif

namespace echo2mri::dataio {

inline constexpr const char* kManifestName = "manifest.json";

/// Sequence manifest: {domain, frames: [paths], pairing: [[echo, mri], ...]}.
/// Frame paths are relative to the manifest's directory unless absolute.
struct Manifest {
  std::string domain;  ///< "echo" or "mri"
  std::vector<std::string> frames;
  std::optional<std::vector<std::pair<int, int>>> pairing;
  nlohmann::json extra = nlohmann::json::object();  ///< producer-specific fields, kept verbatim
};

inline void to_json(nlohmann::json& j, const Manifest& m) {
  j = m.extra;
  j["domain"] = m.domain;
  j["frames"] = m.frames;
  if (m.pairing) {
    auto& p = j["pairing"] = nlohmann::json::array();
    for (const auto& [e, r] : *m.pairing) p.push_back({e, r});
  }
}

inline Manifest parse_manifest(const nlohmann::json& j, const std::string& where) {
  auto bad = [&](const std::string& why) { return IngestionError(where, "invalid manifest: " + why); };
  if (!j.is_object()) throw bad("not an object");
  Manifest m;
  if (!j.contains("domain") || !j["domain"].is_string()) throw bad("missing 'domain'");
  m.domain = j["domain"].get<std::string>();
  if (m.domain != "echo" && m.domain != "mri") throw bad("domain must be \"echo\" or \"mri\"");
  if (!j.contains("frames") || !j["frames"].is_array()) throw bad("missing 'frames' array");
  for (const auto& f : j["frames"]) {
    if (!f.is_string()) throw bad("frame entries must be strings");
    m.frames.push_back(f.get<std::string>());
  }
  if (j.contains("pairing") && !j["pairing"].is_null()) {
    std::vector<std::pair<int, int>> pairs;
    for (const auto& p : j["pairing"]) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer()) {
        throw bad("pairing entries must be [echo_index, mri_index]");
      }
      pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
    }
    m.pairing = std::move(pairs);
  }
  for (const auto& [k, v] : j.items()) {
    if (k != "domain" && k != "frames" && k != "pairing") m.extra[k] = v;
  }
  return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path.string(), "cannot open manifest");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(path.string(), std::string("malformed JSON: ") + e.what());
  }
  return parse_manifest(j, path.string());
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << nlohmann::json(m).dump(2) << "\n";
}

namespace detail {

/// "frame_10" sorts after "frame_9": digit runs compare numerically.
inline bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (std::isdigit(static_cast<unsigned char>(a[i])) && std::isdigit(static_cast<unsigned char>(b[j]))) {
      std::size_t i2 = i, j2 = j;
      while (i2 < a.size() && std::isdigit(static_cast<unsigned char>(a[i2]))) ++i2;
      while (j2 < b.size() && std::isdigit(static_cast<unsigned char>(b[j2]))) ++j2;
      auto strip = [](std::string_view s) {
        const auto k = s.find_first_not_of('0');
        return k == std::string_view::npos ? std::string_view{} : s.substr(k);
      };
      const auto na = strip(std::string_view(a).substr(i, i2 - i));
      const auto nb = strip(std::string_view(b).substr(j, j2 - j));
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = i2;
      j = j2;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

inline FrameSequence load_listed(const std::filesystem::path& base, const std::vector<std::string>& files,
                                 const std::string& source) {
  if (files.empty()) throw IngestionError(source, "no frames");
  FrameSequence seq;
  for (std::size_t i = 0; i < files.size(); ++i) {
    std::filesystem::path p(files[i]);
    if (p.is_relative()) p = base / p;
    try {
      seq.emplace_back(read_image(p), static_cast<int>(i));
    } catch (const IngestionError& e) {
      throw IngestionError(source, e.what());
    }
    if (seq.back().pixels.rows() != seq.front().pixels.rows() ||
        seq.back().pixels.cols() != seq.front().pixels.cols()) {
      throw IngestionError(source, "frame " + p.string() + " differs in size from the first frame");
    }
  }
  return seq;
}

#if defined(ECHO2MRI_HAVE_OPENCV)
inline FrameSequence decode_video(const std::filesystem::path& path) {
  cv::VideoCapture cap(path.string());
  if (!cap.isOpened()) throw IngestionError(path.string(), "cannot decode video container");
  FrameSequence seq;
  cv::Mat m;
  while (cap.read(m)) {
    if (m.empty()) break;
    Image img(m.rows, m.cols);
    const double scale = m.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
    for (int y = 0; y < m.rows; ++y) {
      for (int x = 0; x < m.cols; ++x) {
        double v = 0.0;
        if (m.channels() == 1) {
          v = m.depth() == CV_16U ? m.at<std::uint16_t>(y, x) : m.at<std::uint8_t>(y, x);
        } else {
          const auto* px = m.ptr<std::uint8_t>(y) + x * m.channels();
          v = 0.114 * px[0] + 0.587 * px[1] + 0.299 * px[2];  // BGR
        }
        img(y, x) = static_cast<float>(v * scale);
      }
    }
    seq.emplace_back(std::move(img), static_cast<int>(seq.size()));
  }
  if (seq.empty()) throw IngestionError(path.string(), "video contains no frames");
  return seq;
}
#endif

}  // namespace detail

/// Loads a frame sequence from a directory of numbered images, a directory
/// or file holding a manifest, or (when built with OpenCV) a video file.
inline FrameSequence extract_frames(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::exists(path, ec)) throw IngestionError(path.string(), "no such file or directory");
  if (fs::is_directory(path)) {
    if (fs::exists(path / kManifestName)) return extract_frames(path / kManifestName);
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) {
        names.push_back(entry.path().filename().string());
      }
    }
    if (names.empty()) throw IngestionError(path.string(), "directory contains no PNG/PGM frames");
    std::sort(names.begin(), names.end(), detail::natural_less);
    return detail::load_listed(path, names, path.string());
  }
  if (detail::lower_ext(path) == ".json") {
    const Manifest m = read_manifest(path);
    return detail::load_listed(path.parent_path(), m.frames, path.string());
  }
  if (is_image_file(path)) return detail::load_listed(path.parent_path(), {path.filename().string()}, path.string());
#if defined(ECHO2MRI_HAVE_OPENCV)
  return detail::decode_video(path);
#else
  throw IngestionError(path.string(), "video containers need a build with OpenCV");
#endif
}

/// Writes frames as 16-bit PNGs `<stem>_NNNN.png` plus a manifest.
inline Manifest write_sequence(const std::filesystem::path& dir, const FrameSequence& seq,
                               const std::string& domain, const std::string& stem = "frame") {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.domain = domain;
  for (const auto& f : seq) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04d.png", stem.c_str(), f.time_index);
    write_image(dir / name, f.pixels);
    m.frames.emplace_back(name);
  }
  write_manifest(dir / kManifestName, m);
  return m;
}

/// Writes frame i under names[i] (extension forced to .png) plus a manifest.
inline Manifest write_sequence_named(const std::filesystem::path& dir, const FrameSequence& seq,
                                     const std::string& domain, const std::vector<std::string>& names,
                                     const nlohmann::json& extra = nlohmann::json::object()) {
  if (names.size() != seq.size()) throw InputError("one file name per frame is required");
  std::filesystem::create_directories(dir);
  Manifest m;
  m.domain = domain;
  m.extra = extra;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto name = std::filesystem::path(names[i]).filename().replace_extension(".png").string();
    write_image(dir / name, seq[i].pixels);
    m.frames.push_back(name);
  }
  write_manifest(dir / kManifestName, m);
  return m;
}

/// File names of the frames behind a sequence source, in temporal order;
/// frame_NNNN.png for sources without names (videos).
inline std::vector<std::string> frame_names(const std::filesystem::path& path, std::size_t n_frames) {
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  if (fs::is_directory(path) && fs::exists(path / kManifestName)) {
    for (const auto& f : read_manifest(path / kManifestName).frames) names.push_back(fs::path(f).filename().string());
  } else if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) names.push_back(entry.path().filename().string());
    }
    std::sort(names.begin(), names.end(), detail::natural_less);
  } else if (detail::lower_ext(path) == ".json") {
    for (const auto& f : read_manifest(path).frames) names.push_back(fs::path(f).filename().string());
  } else if (is_image_file(path)) {
    names.push_back(path.filename().string());
  }
  const std::set<std::string> unique(names.begin(), names.end());
  if (names.size() != n_frames || unique.size() != names.size()) {
    names.clear();
    for (std::size_t i = 0; i < n_frames; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "frame_%04zu.png", i);
      names.emplace_back(buf);
    }
  }
  return names;
}

/// A loadable sequence found under a dataset root.
struct SequenceSource {
  std::filesystem::path relative;  ///< "" when the root itself is the sequence
  std::filesystem::path path;
};

namespace detail {
inline bool is_video_file(const std::filesystem::path& p) {
  const auto e = lower_ext(p);
  return e == ".mp4" || e == ".avi" || e == ".mov" || e == ".mkv" || e == ".webm";
}

inline bool holds_sequence(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / kManifestName)) return true;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) return true;
  }
  return false;
}

inline void discover(const std::filesystem::path& root, const std::filesystem::path& dir,
                     std::vector<SequenceSource>& out) {
  namespace fs = std::filesystem;
  if (holds_sequence(dir)) {
    out.push_back({fs::relative(dir, root), dir});
    return;
  }
  std::vector<fs::path> children;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() || (entry.is_regular_file() && is_video_file(entry.path()))) {
      children.push_back(entry.path());
    }
  }
  std::sort(children.begin(), children.end(),
            [](const fs::path& a, const fs::path& b) { return natural_less(a.filename().string(), b.filename().string()); });
  for (const auto& c : children) {
    if (fs::is_directory(c)) discover(root, c, out);
    else out.push_back({fs::relative(c, root).replace_extension(), c});
  }
}
}  // namespace detail

/// Every sequence under `root`: the root itself when it holds frames (or is
/// a file), otherwise each descendant directory holding frames and each
/// video file, in natural order.
inline std::vector<SequenceSource> discover_sequences(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::exists(root)) throw IngestionError(root.string(), "no such file or directory");
  std::vector<SequenceSource> out;
  if (!fs::is_directory(root)) {
    out.push_back({"", root});
    return out;
  }
  detail::discover(root, root, out);
  for (auto& s : out) {
    if (s.relative == ".") s.relative.clear();
  }
  if (out.empty()) throw IngestionError(root.string(), "no frame sequences found");
  return out;
}

}  // namespace echo2mri::dataio

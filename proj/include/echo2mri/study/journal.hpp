#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "echo2mri/error.hpp"

namespace echo2mri::study {

/// Append-only JSON-lines event log. Every append is a single write followed
/// by fsync, so an acknowledged event survives a crash. A torn final line
/// (crash mid-write) is discarded on open.
class Journal {
 public:
  /// In-memory only; nothing persists.
  Journal() = default;

  explicit Journal(const std::filesystem::path& path) : path_(path) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const bool existed = fs::exists(path);
    fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open study store '" + path.string() + "': " + std::strerror(errno));
    // One writer per store; a second process would fork the history.
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw Error("study store '" + path.string() + "' is in use by another process");
    }
    if (existed) {
      try {
        load();
      } catch (...) {
        ::close(fd_);
        throw;
      }
    }
    if (torn_bytes_ > 0 && ::ftruncate(fd_, static_cast<off_t>(valid_bytes_)) != 0) {
      throw Error("cannot repair study store '" + path.string() + "': " + std::strerror(errno));
    }
    if (!existed) sync_parent();
  }

  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;
  ~Journal() {
    if (fd_ >= 0) ::close(fd_);
  }

  /// Events read at open, in order.
  const std::vector<nlohmann::json>& replayed() const noexcept { return replayed_; }
  /// Bytes dropped from a torn trailing line at open.
  std::size_t torn_bytes() const noexcept { return torn_bytes_; }
  bool persistent() const noexcept { return fd_ >= 0; }

  void append(const nlohmann::json& event) {
    if (fd_ < 0) return;
    const std::string line = event.dump() + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(std::string("study store write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw Error(std::string("study store fsync failed: ") + std::strerror(errno));
  }

 private:
  void load() {
    std::ifstream in(path_, std::ios::binary);
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    int lineno = 0;
    while (pos < data.size()) {
      const auto nl = data.find('\n', pos);
      ++lineno;
      if (nl == std::string::npos) {
        // Unterminated tail: an append that never completed, never acked.
        torn_bytes_ = data.size() - pos;
        break;
      }
      const std::string line = data.substr(pos, nl - pos);
      if (!line.empty()) {
        try {
          replayed_.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error&) {
          throw Error("study store '" + path_.string() + "' is corrupt at line " + std::to_string(lineno));
        }
      }
      pos = nl + 1;
    }
    valid_bytes_ = pos;
  }

  void sync_parent() {
    const auto dir = std::filesystem::absolute(path_).parent_path();
    const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
    if (dfd >= 0) {
      ::fsync(dfd);
      ::close(dfd);
    }
  }

  std::filesystem::path path_;
  int fd_ = -1;
  std::vector<nlohmann::json> replayed_;
  std::size_t valid_bytes_ = 0;
  std::size_t torn_bytes_ = 0;
};

}  // namespace echo2mri::study

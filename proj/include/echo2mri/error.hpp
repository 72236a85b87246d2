#pragma once

#include <stdexcept>
#include <string>

namespace echo2mri {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration field is out of its valid domain. `field()` names it.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("invalid " + field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  IngestionError(const std::string& path, const std::string& cause)
      : Error("cannot ingest '" + path + "': " + cause), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class SequenceTooShortError : public Error {
 public:
  explicit SequenceTooShortError(std::size_t length)
      : Error("sequence of " + std::to_string(length) +
              " frames is too short; at least 3 are required"),
        length_(length) {}
  std::size_t length() const noexcept { return length_; }

 private:
  std::size_t length_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class ScheduleError : public Error {
 public:
  using Error::Error;
};

class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// Malformed caller input (evaluation and study layers).
class InputError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

}  // namespace echo2mri

#pragma once

#include <stdexcept>
#include <string>

namespace facefuse {

// Base of every error thrown by the library. `code()` is a stable,
// machine-parsable identifier used by the command-line front end.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& what) : Error("shape_mismatch", what) {}
};

class RangeViolation : public Error {
 public:
  explicit RangeViolation(const std::string& what) : Error("range_violation", what) {}
};

class FileNotFound : public Error {
 public:
  explicit FileNotFound(const std::string& what) : Error("file_not_found", what) {}
};

class UnsupportedFormat : public Error {
 public:
  explicit UnsupportedFormat(const std::string& what) : Error("unsupported_format", what) {}
};

class CorruptData : public Error {
 public:
  explicit CorruptData(const std::string& what) : Error("corrupt_data", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io_error", what) {}
};

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(const std::string& what) : Error("training_diverged", what) {}
};

class Unavailable : public Error {
 public:
  explicit Unavailable(const std::string& what) : Error("unavailable", what) {}
};

}  // namespace facefuse

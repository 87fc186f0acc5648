#pragma once

#include <stdexcept>
#include <string>

namespace cris {

/// Base error for the whole library. Every throw site attaches a stable,
/// machine-readable code (e.g. "shape-mismatch") so callers and the CLI can
/// report failures without parsing message text.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct InvalidArgument : Error {
  using Error::Error;
};

struct ShapeError : InvalidArgument {
  explicit ShapeError(const std::string& message)
      : InvalidArgument("shape-mismatch", message) {}
};

struct IoError : Error {
  using Error::Error;
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string& message)
      : Error("integrity-error", message) {}
};

struct VersionError : Error {
  explicit VersionError(const std::string& message)
      : Error("version-mismatch", message) {}
};

struct ConfigMismatchError : Error {
  explicit ConfigMismatchError(const std::string& message)
      : Error("config-mismatch", message) {}
};

}  // namespace cris

#pragma once

#include <stdexcept>
#include <string>

namespace aviary {

// Pipeline error taxonomy. CLI maps ConfigError to exit code 2 and the
// data-level errors to exit code 3.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ManifestError : DataError {
  explicit ManifestError(const std::string& msg) : DataError(msg) {}
};

struct DegenerateGeometry : std::runtime_error {
  explicit DegenerateGeometry(const std::string& msg)
      : std::runtime_error(msg) {}
};

}  // namespace aviary

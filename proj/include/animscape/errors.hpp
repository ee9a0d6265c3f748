#pragma once

#include <stdexcept>
#include <string>

namespace animscape {

/// Tensor or image shapes that do not satisfy an operation's contract.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Out-of-range scalar arguments (non-positive sizes, beta <= 1, ...).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent or incomplete configuration. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A required file (checkpoint, codebook, weights, image) is absent. CLI exit code 3.
struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A persisted document carries a format version this build cannot read.
struct MigrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace animscape

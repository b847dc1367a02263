#pragma once

#include <stdexcept>
#include <string>

namespace diskt {

// Malformed input that could not be read at all (bad row, bad header).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Input read fine but violates a domain rule (response outside {0,1}, ...).
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Impossible configuration (k-fold with too few students, guess+slip >= 1).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Training hit a non-finite loss; names the term that diverged.
struct TrainingDiverged : std::runtime_error {
  explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace diskt

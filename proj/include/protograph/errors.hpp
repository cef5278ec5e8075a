#pragma once

#include <stdexcept>
#include <string>

namespace protograph {

/// Bad data fed to an operation: malformed files, shape mismatches,
/// out-of-range indices, violated dataset invariants.
struct InputError : std::runtime_error {
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// A configuration value outside its legal range (e.g. decay not in (0,1)).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Training produced a non-finite quantity; the message names where.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace protograph

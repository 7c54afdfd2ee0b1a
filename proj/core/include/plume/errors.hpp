#pragma once

#include <stdexcept>
#include <string>

namespace plume {

/// Raised for invalid configuration, malformed input files, or violated
/// preconditions that the user can fix. The CLI maps this to exit code 1;
/// everything else that escapes maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace plume

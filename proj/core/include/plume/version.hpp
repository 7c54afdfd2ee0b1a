#pragma once

namespace plume {

// Keep in sync with the project() version in the top-level CMakeLists.
inline constexpr const char* kVersion = "0.1.0";

}  // namespace plume

#pragma once

#include <cstdint>

namespace vortex {

inline constexpr const char* kVersion = "0.2.0";
inline constexpr std::uint32_t kSnapshotFormatVersion = 1;

}  // namespace vortex

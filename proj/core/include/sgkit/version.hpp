#pragma once

namespace sgkit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sgkit

#pragma once

namespace aftlab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace aftlab

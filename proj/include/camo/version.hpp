#pragma once

namespace camo {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace camo

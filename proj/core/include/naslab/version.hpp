#pragma once

namespace naslab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace naslab

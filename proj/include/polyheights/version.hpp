#pragma once

namespace polyheights {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace polyheights

#pragma once

namespace prband {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace prband

#pragma once

namespace latfuse {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace latfuse

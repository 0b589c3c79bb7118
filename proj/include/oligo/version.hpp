#pragma once

namespace oligo {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace oligo

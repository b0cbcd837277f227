#pragma once

namespace ctlab {

inline constexpr const char* kVersion = "ctlab-0.1.0";

}  // namespace ctlab

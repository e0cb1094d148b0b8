#pragma once

namespace zinbhmm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace zinbhmm

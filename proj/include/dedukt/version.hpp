#pragma once

namespace dedukt {

inline constexpr const char* kToolName = "dedukt";
inline constexpr const char* kToolVersion = "0.1.0";

} // namespace dedukt

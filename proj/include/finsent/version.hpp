#pragma once

namespace finsent {

inline constexpr const char* kToolName = "finsent";
inline constexpr const char* kVersion = "0.1.0";

} // namespace finsent

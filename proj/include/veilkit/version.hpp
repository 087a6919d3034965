#pragma once

namespace veilkit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace veilkit

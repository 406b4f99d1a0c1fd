#pragma once

namespace threshsplit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace threshsplit

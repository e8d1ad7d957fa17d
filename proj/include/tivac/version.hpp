#pragma once

namespace tivac {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tivac

#pragma once

namespace fedspectre {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fedspectre

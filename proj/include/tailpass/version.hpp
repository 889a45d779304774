#pragma once

#include <string>
#include <string_view>

namespace tailpass {

inline constexpr std::string_view kVersion = "0.1.0";

inline std::string version_string() { return "tailpass " + std::string(kVersion); }

}  // namespace tailpass

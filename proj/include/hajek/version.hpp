#pragma once

namespace hajek {

inline constexpr const char* version_string = "hajek 0.1.0";

}  // namespace hajek

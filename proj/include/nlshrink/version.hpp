#pragma once

namespace nlshrink {
inline constexpr const char* kVersion = "0.1.0";
}

#pragma once

namespace visitgen {
inline constexpr const char* kVersion = "0.1.0";
}

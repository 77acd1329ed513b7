#pragma once

namespace nnergm {
inline constexpr const char* kVersion = "0.1.0";
}

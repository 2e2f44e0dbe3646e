#pragma once

namespace racam {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace racam

#pragma once

namespace lre {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace lre

#pragma once

namespace pmising {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pmising

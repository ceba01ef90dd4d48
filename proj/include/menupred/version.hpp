#pragma once

namespace menupred {

inline constexpr const char* kArtifactVersion = "1.0.0";

}  // namespace menupred

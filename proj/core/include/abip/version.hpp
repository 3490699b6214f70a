#pragma once

namespace abip {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr unsigned kCheckpointFormatVersion = 1;

}  // namespace abip

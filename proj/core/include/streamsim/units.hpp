#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>

namespace streamsim {

// All timestamps are nanoseconds since the origin of the active clock
// (virtual or wall).
using Nanos = std::chrono::nanoseconds;
using Seconds = std::chrono::duration<double>;

inline constexpr std::uint64_t kKiB = 1024;
inline constexpr std::uint64_t kMiB = 1024 * kKiB;
inline constexpr std::uint64_t kGiB = 1024 * kMiB;

inline double to_seconds(Nanos d) noexcept {
  return static_cast<double>(d.count()) / 1e9;
}

inline Nanos to_nanos(Seconds s) noexcept {
  return Nanos{std::llround(s.count() * 1e9)};
}

/// Serialization time of `bytes` on a link of `bandwidth_bps`, in seconds.
inline double serialization_seconds(std::uint64_t bytes,
                                    double bandwidth_bps) noexcept {
  return static_cast<double>(bytes) * 8.0 / bandwidth_bps;
}

}  // namespace streamsim

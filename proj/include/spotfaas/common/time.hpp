#pragma once

#include <chrono>
#include <cstdint>

namespace spotfaas {

using Clock = std::chrono::steady_clock;
using TimePoint = Clock::time_point;
using Nanos = std::chrono::nanoseconds;

inline std::uint64_t unix_millis(std::chrono::system_clock::time_point t) noexcept {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count());
}

inline std::uint64_t unix_millis_now() noexcept { return unix_millis(std::chrono::system_clock::now()); }

// Maps a wall-clock deadline onto the local steady clock.
inline TimePoint steady_from_unix_millis(std::uint64_t ms) noexcept {
  auto wall_now = std::chrono::system_clock::now();
  auto steady_now = Clock::now();
  auto target = std::chrono::system_clock::time_point(std::chrono::milliseconds(ms));
  return steady_now + std::chrono::duration_cast<Clock::duration>(target - wall_now);
}

inline double seconds(Nanos d) noexcept { return std::chrono::duration<double>(d).count(); }

}  // namespace spotfaas

#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>

namespace emlops {

using TimePoint = std::chrono::system_clock::time_point;

/// Injectable wall clock; services take one so tests can control time.
using Clock = std::function<TimePoint()>;

inline Clock system_clock() {
  return [] { return std::chrono::system_clock::now(); };
}

/// "YYYY-MM-DDTHH:MM:SS.mmmZ"
std::string format_utc(TimePoint tp);

/// Accepts "YYYY-MM-DDTHH:MM:SS[.fff]Z". Throws BadRequestError otherwise.
TimePoint parse_utc(std::string_view text);

}  // namespace emlops

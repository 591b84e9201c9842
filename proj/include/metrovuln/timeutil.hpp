#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace metrovuln {

// All timestamps are naive local time at one-minute resolution, stored as
// minutes since 1970-01-01T00:00. Text form is ISO 8601 without seconds,
// `YYYY-MM-DDTHH:MM`.
using Minute = std::int64_t;
using DayNumber = std::int64_t;  // days since 1970-01-01

inline constexpr int kMinutesPerDay = 1440;
inline constexpr int kServiceStartMin = 6 * 60;   // 06:00
inline constexpr int kServiceEndMin = 24 * 60;    // midnight, exclusive
inline constexpr int kServiceMinutes = kServiceEndMin - kServiceStartMin;

DayNumber days_from_civil(int y, int m, int d);
void civil_from_days(DayNumber z, int& y, int& m, int& d);

inline DayNumber day_of(Minute t) { return t >= 0 ? t / kMinutesPerDay : (t - kMinutesPerDay + 1) / kMinutesPerDay; }
inline int tod_minutes(Minute t) { return static_cast<int>(t - day_of(t) * kMinutesPerDay); }

// Returns nullopt on any syntax or range violation.
std::optional<Minute> parse_minute(std::string_view s);
std::optional<DayNumber> parse_date(std::string_view s);

std::string format_minute(Minute t);
std::string format_date(DayNumber day);

inline bool in_service_window(Minute t) {
  int tod = tod_minutes(t);
  return tod >= kServiceStartMin && tod < kServiceEndMin;
}

}  // namespace metrovuln

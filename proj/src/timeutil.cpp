#include "metrovuln/timeutil.hpp"

#include <charconv>
#include <cstdio>

namespace metrovuln {

// Howard Hinnant's civil date algorithms.
DayNumber days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return static_cast<DayNumber>(era) * 146097 + static_cast<DayNumber>(doe) - 719468;
}

void civil_from_days(DayNumber z, int& y, int& m, int& d) {
  z += 719468;
  const DayNumber era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const DayNumber yr = static_cast<DayNumber>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yr + (m <= 2));
}

namespace {

bool parse_int(std::string_view s, int& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

bool days_in_month_ok(int y, int m, int d) {
  static const int len[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m < 1 || m > 12 || d < 1) return false;
  int n = len[m - 1];
  if (m == 2 && ((y % 4 == 0 && y % 100 != 0) || y % 400 == 0)) n = 29;
  return d <= n;
}

}  // namespace

std::optional<DayNumber> parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y, m, d;
  if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), m) || !parse_int(s.substr(8, 2), d))
    return std::nullopt;
  if (!days_in_month_ok(y, m, d)) return std::nullopt;
  return days_from_civil(y, m, d);
}

std::optional<Minute> parse_minute(std::string_view s) {
  if (s.size() != 16 || s[10] != 'T' || s[13] != ':') return std::nullopt;
  auto day = parse_date(s.substr(0, 10));
  if (!day) return std::nullopt;
  int hh, mm;
  if (!parse_int(s.substr(11, 2), hh) || !parse_int(s.substr(14, 2), mm)) return std::nullopt;
  if (hh < 0 || hh > 23 || mm < 0 || mm > 59) return std::nullopt;
  return *day * kMinutesPerDay + hh * 60 + mm;
}

std::string format_date(DayNumber day) {
  int y, m, d;
  civil_from_days(day, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
  return buf;
}

std::string format_minute(Minute t) {
  int tod = tod_minutes(t);
  char buf[24];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d", format_date(day_of(t)).c_str(), tod / 60, tod % 60);
  return buf;
}

}  // namespace metrovuln

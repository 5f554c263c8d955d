#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>

#include "profgan/errors.hpp"

namespace profgan::calendar {

inline constexpr int kHoursPerDay = 24;
inline constexpr int kMonths = 12;

constexpr bool is_leap(int year) {
  return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

constexpr int days_in_year(int year) { return is_leap(year) ? 366 : 365; }
constexpr int hours_in_year(int year) { return days_in_year(year) * kHoursPerDay; }

/// month is 1-based.
constexpr int days_in_month(int year, int month) {
  constexpr std::array<int, 12> kDays{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2 && is_leap(year)) return 29;
  return kDays.at(static_cast<std::size_t>(month - 1));
}

constexpr int hours_in_month(int year, int month) {
  return days_in_month(year, month) * kHoursPerDay;
}

struct MonthDay {
  int month;  // 1..12
  int day;    // 1..31
};

/// 0-based day of year -> calendar month/day.
constexpr MonthDay month_day_of(int year, int day_of_year) {
  int m = 1;
  while (m < 12 && day_of_year >= days_in_month(year, m)) {
    day_of_year -= days_in_month(year, m);
    ++m;
  }
  return {m, day_of_year + 1};
}

constexpr int month_of_day(int year, int day_of_year) {
  return month_day_of(year, day_of_year).month;
}

constexpr int day_of_year(int year, int month, int day) {
  int doy = day - 1;
  for (int m = 1; m < month; ++m) doy += days_in_month(year, m);
  return doy;
}

/// Position of an hour within its calendar year.
struct HourStamp {
  int year;
  int hour_of_year;

  friend constexpr bool operator==(const HourStamp&, const HourStamp&) = default;
  friend constexpr auto operator<=>(const HourStamp&, const HourStamp&) = default;
};

constexpr HourStamp next_hour(HourStamp s) {
  if (s.hour_of_year + 1 >= hours_in_year(s.year)) return {s.year + 1, 0};
  return {s.year, s.hour_of_year + 1};
}

/// Formats as `YYYY-MM-DDTHH:00`.
inline std::string format_timestamp(HourStamp s) {
  const int doy = s.hour_of_year / kHoursPerDay;
  const int hour = s.hour_of_year % kHoursPerDay;
  const auto md = month_day_of(s.year, doy);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:00", s.year, md.month, md.day, hour);
  return buf;
}

namespace detail {
inline bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}
}  // namespace detail

/// Parses `YYYY-MM-DDTHH:00`. Minutes other than 00 are rejected.
inline HourStamp parse_timestamp(std::string_view text) {
  auto fail = [&] { return DataError("malformed timestamp '" + std::string(text) + "'"); };
  if (text.size() != 16 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
      text[13] != ':' || text.substr(14) != "00") {
    throw fail();
  }
  int y = 0, mo = 0, d = 0, h = 0;
  if (!detail::parse_int(text.substr(0, 4), y) || !detail::parse_int(text.substr(5, 2), mo) ||
      !detail::parse_int(text.substr(8, 2), d) || !detail::parse_int(text.substr(11, 2), h)) {
    throw fail();
  }
  if (mo < 1 || mo > 12 || d < 1 || d > days_in_month(y, mo) || h < 0 || h > 23) throw fail();
  return {y, day_of_year(y, mo, d) * kHoursPerDay + h};
}

}  // namespace profgan::calendar

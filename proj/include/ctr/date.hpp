#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "ctr/common.hpp"

namespace ctr {

// Calendar day stored as days since 1970-01-01 (proleptic Gregorian).
class Date {
 public:
  Date() = default;
  explicit Date(int32_t days) : days_(days) {}

  static Date from_civil(int year, int month, int day) {
    year -= month <= 2;
    const int era = (year >= 0 ? year : year - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(year - era * 400);
    const unsigned doy = (153u * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return Date(era * 146097 + static_cast<int>(doe) - 719468);
  }

  // Parses "YYYY-MM-DD".
  static Date parse(std::string_view iso) {
    int y = 0, m = 0, d = 0;
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-' ||
        std::from_chars(iso.data(), iso.data() + 4, y).ec != std::errc{} ||
        std::from_chars(iso.data() + 5, iso.data() + 7, m).ec != std::errc{} ||
        std::from_chars(iso.data() + 8, iso.data() + 10, d).ec != std::errc{} ||
        m < 1 || m > 12 || d < 1 || d > 31) {
      throw DataError("invalid date: '" + std::string(iso) + "' (expected YYYY-MM-DD)");
    }
    return from_civil(y, m, d);
  }

  std::string to_string() const {
    const int z = days_ + 719468;
    const int era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int y = static_cast<int>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y + (m <= 2), m, d);
    return buf;
  }

  int32_t days() const { return days_; }
  Date operator+(int32_t n) const { return Date(days_ + n); }
  Date operator-(int32_t n) const { return Date(days_ - n); }
  int32_t operator-(Date o) const { return days_ - o.days_; }
  auto operator<=>(const Date&) const = default;

 private:
  int32_t days_ = 0;
};

}  // namespace ctr

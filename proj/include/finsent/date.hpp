#pragma once

#include <array>
#include <charconv>
#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

#include "finsent/errors.hpp"

namespace finsent {

/// Calendar date. Ordering is lexicographic on (year, month, day).
struct Date {
    int year = 0;
    int month = 0;
    int day = 0;

    auto operator<=>(const Date&) const = default;
};

inline bool is_leap_year(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

inline int days_in_month(int year, int month) {
    static constexpr std::array<int, 12> kDays = {31, 28, 31, 30, 31, 30,
                                                  31, 31, 30, 31, 30, 31};
    if (month == 2 && is_leap_year(year)) return 29;
    return kDays[static_cast<std::size_t>(month - 1)];
}

inline bool is_valid_date(const Date& d) {
    return d.month >= 1 && d.month <= 12 && d.day >= 1 &&
           d.day <= days_in_month(d.year, d.month);
}

/// Parse a strict ISO-8601 calendar date, `YYYY-MM-DD`.
inline Date parse_date(std::string_view s) {
    auto fail = [&] {
        throw DataError("invalid date '" + std::string(s) + "', expected YYYY-MM-DD");
    };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') fail();
    Date d;
    auto parse_int = [&](std::string_view part, int& out) {
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
        if (ec != std::errc{} || ptr != part.data() + part.size()) fail();
    };
    parse_int(s.substr(0, 4), d.year);
    parse_int(s.substr(5, 2), d.month);
    parse_int(s.substr(8, 2), d.day);
    if (!is_valid_date(d)) fail();
    return d;
}

inline std::string to_string(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return std::string(buf);
}

/// Serial day number (days since 1970-01-01, negative before).
inline long days_from_civil(const Date& d) {
    long y = d.year;
    const int m = d.month;
    const int dd = d.day;
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + dd - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

/// Inverse of days_from_civil.
inline Date date_from_days(long z) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long y = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned dd = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(dd)};
}

/// Shift by whole years, clamping Feb 29 to Feb 28 when needed.
inline Date add_years(const Date& d, int years) {
    Date out = d;
    out.year += years;
    if (out.day > days_in_month(out.year, out.month)) {
        out.day = days_in_month(out.year, out.month);
    }
    return out;
}

} // namespace finsent

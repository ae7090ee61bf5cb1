#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace citysig {

enum class DateFormat { iso, us }; // iso: YYYY-MM-DD, us: MM/DD/YYYY

struct Date {
    int year = 0;
    int month = 0;
    int day = 0;

    auto operator<=>(const Date&) const = default;
};

struct DateTime {
    Date date;
    int hour = 0;
    int minute = 0;
    int second = 0;

    auto operator<=>(const DateTime&) const = default;
};

// Inclusive on both ends.
struct DateWindow {
    Date first;
    Date last;

    bool contains(const Date& d) const { return first <= d && d <= last; }
};

bool is_valid_date(int year, int month, int day);

// Days since 1970-01-01 (proleptic Gregorian) and back.
long days_from_civil(const Date& d);
Date civil_from_days(long days);
Date add_days(const Date& d, long days);

std::optional<Date> parse_date(std::string_view text, DateFormat format);

// A date optionally followed by a time of day: "HH:MM[:SS]" (24h) or a
// 12-hour clock with a trailing AM/PM marker.
std::optional<DateTime> parse_datetime(std::string_view text, DateFormat format);

std::string format_date(const Date& d);         // YYYY-MM-DD
std::string format_datetime(const DateTime& t); // YYYY-MM-DD HH:MM:SS

} // namespace citysig

#include "citysig/date.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace citysig {

namespace {

bool is_leap(int year) {
    return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int days_in_month(int year, int month) {
    static constexpr std::array<int, 12> days = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month < 1 || month > 12) return 0;
    if (month == 2 && is_leap(year)) return 29;
    return days[month - 1];
}

// Parses exactly `width` digits (or 1..width when flexible) from text.
std::optional<int> take_int(std::string_view& text, size_t max_width) {
    size_t n = 0;
    while (n < text.size() && n < max_width && text[n] >= '0' && text[n] <= '9') ++n;
    if (n == 0) return std::nullopt;
    int value = 0;
    std::from_chars(text.data(), text.data() + n, value);
    text.remove_prefix(n);
    return value;
}

bool take_char(std::string_view& text, char c) {
    if (text.empty() || text.front() != c) return false;
    text.remove_prefix(1);
    return true;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

std::optional<Date> parse_date_prefix(std::string_view& text, DateFormat format) {
    int y = 0, m = 0, d = 0;
    if (format == DateFormat::iso) {
        auto yy = take_int(text, 4);
        if (!yy || !take_char(text, '-')) return std::nullopt;
        auto mm = take_int(text, 2);
        if (!mm || !take_char(text, '-')) return std::nullopt;
        auto dd = take_int(text, 2);
        if (!dd) return std::nullopt;
        y = *yy; m = *mm; d = *dd;
    } else {
        auto mm = take_int(text, 2);
        if (!mm || !take_char(text, '/')) return std::nullopt;
        auto dd = take_int(text, 2);
        if (!dd || !take_char(text, '/')) return std::nullopt;
        auto yy = take_int(text, 4);
        if (!yy) return std::nullopt;
        y = *yy; m = *mm; d = *dd;
    }
    if (!is_valid_date(y, m, d)) return std::nullopt;
    return Date{y, m, d};
}

} // namespace

bool is_valid_date(int year, int month, int day) {
    return year >= 1 && year <= 9999 && month >= 1 && month <= 12 && day >= 1 &&
           day <= days_in_month(year, month);
}

long days_from_civil(const Date& d) {
    // Howard Hinnant's civil calendar algorithm.
    const int y = d.year - (d.month <= 2 ? 1 : 0);
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy =
        (153u * static_cast<unsigned>(d.month + (d.month > 2 ? -3 : 9)) + 2u) / 5u +
        static_cast<unsigned>(d.day) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

Date civil_from_days(long days) {
    const long z = days + 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long y = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned day = doy - (153 * mp + 2) / 5 + 1;
    const unsigned month = mp < 10 ? mp + 3 : mp - 9;
    return Date{static_cast<int>(y + (month <= 2 ? 1 : 0)), static_cast<int>(month),
                static_cast<int>(day)};
}

Date add_days(const Date& d, long days) {
    return civil_from_days(days_from_civil(d) + days);
}

std::optional<Date> parse_date(std::string_view text, DateFormat format) {
    std::string_view rest = trim(text);
    auto d = parse_date_prefix(rest, format);
    if (!d || !rest.empty()) return std::nullopt;
    return d;
}

std::optional<DateTime> parse_datetime(std::string_view text, DateFormat format) {
    std::string_view rest = trim(text);
    auto d = parse_date_prefix(rest, format);
    if (!d) return std::nullopt;
    DateTime out{*d, 0, 0, 0};
    if (rest.empty()) return out;

    if (!take_char(rest, ' ')) return std::nullopt;
    while (take_char(rest, ' ')) {}
    auto hh = take_int(rest, 2);
    if (!hh) return std::nullopt;
    int hour = *hh, minute = 0, second = 0;
    if (take_char(rest, ':')) {
        auto mm = take_int(rest, 2);
        if (!mm) return std::nullopt;
        minute = *mm;
        if (take_char(rest, ':')) {
            auto ss = take_int(rest, 2);
            if (!ss) return std::nullopt;
            second = *ss;
        }
    }

    rest = trim(rest);
    if (!rest.empty()) {
        // 12-hour clock marker
        bool pm;
        if (rest == "AM" || rest == "am" || rest == "Am") pm = false;
        else if (rest == "PM" || rest == "pm" || rest == "Pm") pm = true;
        else return std::nullopt;
        if (hour < 1 || hour > 12) return std::nullopt;
        if (pm) hour = hour == 12 ? 12 : hour + 12;
        else hour = hour == 12 ? 0 : hour;
    }

    if (hour < 0 || hour > 23 || minute < 0 || minute > 59 || second < 0 || second > 59)
        return std::nullopt;
    out.hour = hour;
    out.minute = minute;
    out.second = second;
    return out;
}

std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

std::string format_datetime(const DateTime& t) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d %02d:%02d:%02d", t.date.year, t.date.month,
                  t.date.day, t.hour, t.minute, t.second);
    return buf;
}

} // namespace citysig

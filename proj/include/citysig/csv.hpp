#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace citysig {

// RFC-4180-style reader: quoted fields may contain the delimiter, doubled
// quotes, and line breaks. Records end at a bare LF or CRLF. Completely
// empty lines are skipped.
class CsvReader {
public:
    explicit CsvReader(std::istream& in, char delimiter = ',');

    // Next record, or nullopt at end of input.
    std::optional<std::vector<std::string>> next();

private:
    std::istream& in_;
    char delimiter_;
};

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out, char delimiter = ',');

    void write_row(std::span<const std::string> fields);
    void write_row(std::initializer_list<std::string_view> fields);

private:
    void write_field(std::string_view field);

    std::ostream& out_;
    char delimiter_;
};

// Shortest decimal representation that round-trips the exact double.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::string_view trim_view(std::string_view s);

} // namespace citysig

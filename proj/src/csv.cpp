#include "citysig/csv.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <system_error>

namespace citysig {

CsvReader::CsvReader(std::istream& in, char delimiter) : in_(in), delimiter_(delimiter) {}

std::optional<std::vector<std::string>> CsvReader::next() {
    for (;;) {
        if (in_.peek() == std::char_traits<char>::eof()) return std::nullopt;

        std::vector<std::string> fields;
        std::string field;
        bool quoted = false;
        bool any_char = false;
        bool done = false;

        while (!done) {
            int ci = in_.get();
            if (ci == std::char_traits<char>::eof()) {
                done = true;
                break;
            }
            char c = static_cast<char>(ci);
            any_char = true;
            if (quoted) {
                if (c == '"') {
                    if (in_.peek() == '"') {
                        in_.get();
                        field.push_back('"');
                    } else {
                        quoted = false;
                    }
                } else {
                    field.push_back(c);
                }
            } else if (c == '"' && field.empty()) {
                quoted = true;
            } else if (c == delimiter_) {
                fields.push_back(std::move(field));
                field.clear();
            } else if (c == '\n') {
                if (!field.empty() && field.back() == '\r') field.pop_back();
                done = true;
            } else {
                field.push_back(c);
            }
        }

        if (!any_char) return std::nullopt;
        // skip blank lines (a record that is a single empty field and had no delimiter)
        if (fields.empty() && field.empty()) continue;
        fields.push_back(std::move(field));
        return fields;
    }
}

CsvWriter::CsvWriter(std::ostream& out, char delimiter) : out_(out), delimiter_(delimiter) {}

void CsvWriter::write_field(std::string_view field) {
    bool needs_quotes = field.find_first_of("\"\r\n") != std::string_view::npos ||
                        field.find(delimiter_) != std::string_view::npos;
    if (!needs_quotes) {
        out_ << field;
        return;
    }
    out_ << '"';
    for (char c : field) {
        if (c == '"') out_ << "\"\"";
        else out_ << c;
    }
    out_ << '"';
}

void CsvWriter::write_row(std::span<const std::string> fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) out_ << delimiter_;
        write_field(fields[i]);
    }
    out_ << '\n';
}

void CsvWriter::write_row(std::initializer_list<std::string_view> fields) {
    size_t i = 0;
    for (auto f : fields) {
        if (i++ > 0) out_ << delimiter_;
        write_field(f);
    }
    out_ << '\n';
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

std::optional<double> parse_double(std::string_view text) {
    text = trim_view(text);
    if (text.empty()) return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

std::optional<long long> parse_int(std::string_view text) {
    text = trim_view(text);
    if (text.empty()) return std::nullopt;
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

std::string_view trim_view(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

} // namespace citysig

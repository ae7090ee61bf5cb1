#include "citysig/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "citysig/csv.hpp"
#include "citysig/error.hpp"

namespace citysig {

nlohmann::json IngestReport::to_json() const {
    nlohmann::json reasons = nlohmann::json::object();
    for (const auto& [reason, count] : rejection_reasons) reasons[reason] = count;
    return {{"rows_read", rows_read},
            {"rows_accepted", rows_accepted},
            {"rows_rejected", rows_rejected},
            {"rejection_reasons", reasons}};
}

IngestReport IngestReport::from_json(const nlohmann::json& j) {
    IngestReport r;
    r.rows_read = j.at("rows_read").get<uint64_t>();
    r.rows_accepted = j.at("rows_accepted").get<uint64_t>();
    r.rows_rejected = j.at("rows_rejected").get<uint64_t>();
    for (const auto& [reason, count] : j.at("rejection_reasons").items())
        r.rejection_reasons[reason] = count.get<uint64_t>();
    return r;
}

std::optional<std::string> normalize_zone(std::string_view raw) {
    std::string_view s = trim_view(raw);
    auto all_digits = [](std::string_view v) {
        return !v.empty() && std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; });
    };
    if (s.size() == 5 && all_digits(s)) return std::string(s);
    // ZIP+4
    if (s.size() > 6 && s[5] == '-' && all_digits(s.substr(0, 5)) && all_digits(s.substr(6)))
        return std::string(s.substr(0, 5));
    return std::nullopt;
}

bool is_ascii(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

std::string utf8_scrub(std::string_view s) {
    static constexpr std::string_view replacement = "\xEF\xBF\xBD"; // U+FFFD
    std::string out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        size_t len;
        unsigned cp_min;
        if (c < 0x80) {
            out.push_back(static_cast<char>(c));
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2; cp_min = 0x80;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3; cp_min = 0x800;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4; cp_min = 0x10000;
        } else {
            out.append(replacement);
            ++i;
            continue;
        }
        bool ok = i + len <= s.size();
        unsigned cp = c & (0x7F >> len);
        for (size_t k = 1; ok && k < len; ++k) {
            unsigned char cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) ok = false;
            else cp = (cp << 6) | (cc & 0x3F);
        }
        if (ok && (cp < cp_min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
        if (ok) {
            out.append(s.substr(i, len));
            i += len;
        } else {
            out.append(replacement);
            ++i;
        }
    }
    return out;
}

namespace {

// Resolved index of each mapped column in the header row.
struct HeaderIndex {
    std::map<std::string, size_t> index; // canonical field -> column position

    static HeaderIndex build(const std::vector<std::string>& header, const ColumnMapping& mapping,
                             std::span<const std::string_view> required_fields) {
        HeaderIndex h;
        for (const auto& [field, column] : mapping.columns) {
            auto it = std::find(header.begin(), header.end(), column);
            if (it == header.end()) {
                bool required = std::find(required_fields.begin(), required_fields.end(), field) !=
                                required_fields.end();
                if (required)
                    throw_config("missing_column",
                                 "mapped column \"" + column + "\" (field " + field + ") not in header");
                continue;
            }
            h.index[field] = static_cast<size_t>(it - header.begin());
        }
        for (auto field : required_fields) {
            if (!mapping.column_for(std::string(field)))
                throw_config("missing_column", "mapping does not map required field \"" + std::string(field) + "\"");
            if (!h.index.contains(std::string(field)))
                throw_config("missing_column", "mapped column for field \"" + std::string(field) + "\" not in header");
        }
        return h;
    }

    const std::string* get(const std::vector<std::string>& row, const std::string& field) const {
        auto it = index.find(field);
        if (it == index.end() || it->second >= row.size()) return nullptr;
        return &row[it->second];
    }
};

size_t max_mapped_index(const HeaderIndex& h) {
    size_t m = 0;
    for (const auto& [field, idx] : h.index) m = std::max(m, idx);
    return m;
}

class RowSink {
public:
    RowSink(IngestReport& report, const IngestOptions& options, char delimiter)
        : report_(report), options_(options), delimiter_(delimiter) {}

    void reject(const std::vector<std::string>& row, const std::string& reason) {
        ++report_.rows_read;
        ++report_.rows_rejected;
        ++report_.rejection_reasons[reason];
        if (options_.quarantine) {
            CsvWriter w(*options_.quarantine, delimiter_);
            std::vector<std::string> out = row;
            out.push_back(reason);
            w.write_row(out);
        }
    }

    void accept() {
        ++report_.rows_read;
        ++report_.rows_accepted;
    }

private:
    IngestReport& report_;
    const IngestOptions& options_;
    char delimiter_;
};

bool passes_filter(const HeaderIndex& h, const std::vector<std::string>& row, const ColumnMapping& mapping) {
    if (!mapping.row_filter) return true;
    auto it = h.index.find("__filter__");
    if (it == h.index.end() || it->second >= row.size()) return false;
    std::string_view value = trim_view(row[it->second]);
    for (const auto& allowed : mapping.row_filter->allow)
        if (value == allowed) return true;
    return false;
}

// The filter column is carried through HeaderIndex under a reserved key.
ColumnMapping with_filter_column(const ColumnMapping& mapping) {
    ColumnMapping m = mapping;
    if (m.row_filter) m.columns["__filter__"] = m.row_filter->column;
    return m;
}

} // namespace

std::pair<std::vector<PermitRecord>, IngestReport> parse_permits(std::istream& source,
                                                                 const ColumnMapping& mapping_in,
                                                                 const DateWindow& window,
                                                                 const IngestOptions& options) {
    const ColumnMapping mapping = with_filter_column(mapping_in);
    static constexpr std::string_view required[] = {"zone_id", "work_type", "start_date"};

    CsvReader reader(source, mapping.delimiter);
    auto header = reader.next();
    if (!header) throw_data("empty_file", "input has no header row");
    auto index = HeaderIndex::build(*header, mapping, required);
    const size_t min_columns = max_mapped_index(index) + 1;

    std::vector<PermitRecord> records;
    IngestReport report;
    RowSink sink(report, options, mapping.delimiter);

    while (auto row = reader.next()) {
        if (row->size() < min_columns) {
            sink.reject(*row, "bad_row");
            continue;
        }
        if (!passes_filter(index, *row, mapping)) {
            sink.reject(*row, "filtered");
            continue;
        }

        const std::string* zone_raw = index.get(*row, "zone_id");
        if (!is_ascii(*zone_raw)) {
            sink.reject(*row, "non_ascii_key_field");
            continue;
        }
        auto zone = normalize_zone(*zone_raw);
        if (!zone) {
            sink.reject(*row, "invalid_zone");
            continue;
        }

        const std::string* type_raw = index.get(*row, "work_type");
        auto type_it = mapping.work_types.find(std::string(trim_view(*type_raw)));
        if (type_it == mapping.work_types.end()) {
            sink.reject(*row, "unknown_work_type");
            continue;
        }

        const std::string* start_raw = index.get(*row, "start_date");
        if (!is_ascii(*start_raw)) {
            sink.reject(*row, "non_ascii_key_field");
            continue;
        }
        auto start = parse_date(*start_raw, mapping.date_format);
        if (!start) {
            sink.reject(*row, "bad_date");
            continue;
        }

        std::optional<Date> expiration;
        if (const std::string* exp_raw = index.get(*row, "expiration_date")) {
            if (!trim_view(*exp_raw).empty()) {
                if (!is_ascii(*exp_raw)) {
                    sink.reject(*row, "non_ascii_key_field");
                    continue;
                }
                expiration = parse_date(*exp_raw, mapping.date_format);
                if (!expiration) {
                    sink.reject(*row, "bad_date");
                    continue;
                }
                if (*expiration < *start) {
                    sink.reject(*row, "invalid_date_interval");
                    continue;
                }
            }
        }

        bool in_window;
        if (options.window_mode == WindowMode::start_date) {
            in_window = window.contains(*start);
        } else {
            const Date end = expiration ? *expiration : *start;
            in_window = !(end < window.first) && !(window.last < *start);
        }
        if (!in_window) {
            sink.reject(*row, "out_of_window");
            continue;
        }

        PermitRecord rec;
        rec.zone_id = *zone;
        rec.work_type = type_it->second;
        rec.start_date = *start;
        rec.expiration_date = expiration;
        if (const std::string* b = index.get(*row, "borough")) rec.borough = utf8_scrub(*b);
        if (const std::string* s = index.get(*row, "work_subtype")) rec.work_subtype = utf8_scrub(*s);

        records.push_back(std::move(rec));
        sink.accept();
    }
    return {std::move(records), std::move(report)};
}

std::pair<std::vector<IncidentRecord>, IngestReport> parse_incidents(std::istream& source,
                                                                     const ColumnMapping& mapping_in,
                                                                     const DateWindow& window,
                                                                     const IngestOptions& options) {
    const ColumnMapping mapping = with_filter_column(mapping_in);
    static constexpr std::string_view required[] = {"zone_id", "timestamp", "response_time_s"};

    CsvReader reader(source, mapping.delimiter);
    auto header = reader.next();
    if (!header) throw_data("empty_file", "input has no header row");
    auto index = HeaderIndex::build(*header, mapping, required);
    const size_t min_columns = max_mapped_index(index) + 1;

    std::vector<IncidentRecord> records;
    IngestReport report;
    RowSink sink(report, options, mapping.delimiter);

    while (auto row = reader.next()) {
        if (row->size() < min_columns) {
            sink.reject(*row, "bad_row");
            continue;
        }
        if (!passes_filter(index, *row, mapping)) {
            sink.reject(*row, "filtered");
            continue;
        }

        const std::string* zone_raw = index.get(*row, "zone_id");
        if (!is_ascii(*zone_raw)) {
            sink.reject(*row, "non_ascii_key_field");
            continue;
        }
        auto zone = normalize_zone(*zone_raw);
        if (!zone) {
            sink.reject(*row, "invalid_zone");
            continue;
        }

        const std::string* ts_raw = index.get(*row, "timestamp");
        if (!is_ascii(*ts_raw)) {
            sink.reject(*row, "non_ascii_key_field");
            continue;
        }
        auto ts = parse_datetime(*ts_raw, mapping.date_format);
        if (!ts) {
            sink.reject(*row, "bad_date");
            continue;
        }
        if (!window.contains(ts->date)) {
            sink.reject(*row, "out_of_window");
            continue;
        }

        const std::string* dur_raw = index.get(*row, "response_time_s");
        if (!is_ascii(*dur_raw)) {
            sink.reject(*row, "non_ascii_key_field");
            continue;
        }
        auto duration = parse_double(*dur_raw);
        if (!duration || !std::isfinite(*duration)) {
            sink.reject(*row, "bad_duration");
            continue;
        }
        if (*duration < 0.0) {
            sink.reject(*row, "negative_duration");
            continue;
        }

        records.push_back(IncidentRecord{std::move(*zone), *ts, *duration});
        sink.accept();
    }
    return {std::move(records), std::move(report)};
}

namespace {

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_data("io_error", "cannot open input file: " + path);
    return in;
}

} // namespace

std::pair<std::vector<PermitRecord>, IngestReport> parse_permits_file(const std::string& path,
                                                                      const ColumnMapping& mapping,
                                                                      const DateWindow& window,
                                                                      const IngestOptions& options) {
    auto in = open_or_throw(path);
    return parse_permits(in, mapping, window, options);
}

std::pair<std::vector<IncidentRecord>, IngestReport> parse_incidents_file(const std::string& path,
                                                                          const ColumnMapping& mapping,
                                                                          const DateWindow& window,
                                                                          const IngestOptions& options) {
    auto in = open_or_throw(path);
    return parse_incidents(in, mapping, window, options);
}

void write_permits_csv(std::ostream& out, std::span<const PermitRecord> permits) {
    CsvWriter w(out);
    w.write_row({"zone_id", "borough", "work_type", "work_subtype", "start_date", "expiration_date"});
    for (const auto& p : permits) {
        w.write_row({p.zone_id, p.borough, work_type_name(p.work_type), p.work_subtype,
                     format_date(p.start_date),
                     p.expiration_date ? format_date(*p.expiration_date) : std::string()});
    }
}

void write_incidents_csv(std::ostream& out, std::span<const IncidentRecord> incidents) {
    CsvWriter w(out);
    w.write_row({"zone_id", "timestamp", "response_time_s"});
    for (const auto& i : incidents)
        w.write_row({i.zone_id, format_datetime(i.timestamp), format_double(i.response_time_s)});
}

} // namespace citysig

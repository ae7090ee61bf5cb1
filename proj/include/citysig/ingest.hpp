#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "citysig/mapping.hpp"
#include "citysig/records.hpp"

#include <json.hpp>

namespace citysig {

struct IngestReport {
    uint64_t rows_read = 0;
    uint64_t rows_accepted = 0;
    uint64_t rows_rejected = 0;
    std::map<std::string, uint64_t> rejection_reasons;

    nlohmann::json to_json() const;
    static IngestReport from_json(const nlohmann::json& j);
};

// How the date window applies to permits: membership of the start date
// (default), or any overlap of [start, expiration] with the window.
enum class WindowMode { start_date, overlap };

struct IngestOptions {
    WindowMode window_mode = WindowMode::start_date;
    // When set, every rejected raw row is spilled here with its reason
    // appended as a trailing column.
    std::ostream* quarantine = nullptr;
};

// Parses a delimited permit file into normalized records. Rows that fail
// validation are counted per reason, never fatal; a missing mapped column
// or an unreadable file is fatal. Output order matches input order.
std::pair<std::vector<PermitRecord>, IngestReport> parse_permits(std::istream& source,
                                                                 const ColumnMapping& mapping,
                                                                 const DateWindow& window,
                                                                 const IngestOptions& options = {});

std::pair<std::vector<PermitRecord>, IngestReport> parse_permits_file(const std::string& path,
                                                                      const ColumnMapping& mapping,
                                                                      const DateWindow& window,
                                                                      const IngestOptions& options = {});

std::pair<std::vector<IncidentRecord>, IngestReport> parse_incidents(std::istream& source,
                                                                     const ColumnMapping& mapping,
                                                                     const DateWindow& window,
                                                                     const IngestOptions& options = {});

std::pair<std::vector<IncidentRecord>, IngestReport> parse_incidents_file(const std::string& path,
                                                                          const ColumnMapping& mapping,
                                                                          const DateWindow& window,
                                                                          const IngestOptions& options = {});

// "10001" stays as is, "10001-1234" collapses to "10001" (surrounding
// whitespace stripped first); anything else is invalid.
std::optional<std::string> normalize_zone(std::string_view raw);

bool is_ascii(std::string_view s);

// Replaces invalid UTF-8 byte sequences with U+FFFD; used for free-text
// fields only.
std::string utf8_scrub(std::string_view s);

// Canonical clean-record CSV schemas (also the schemas synthetic cities
// are written in).
void write_permits_csv(std::ostream& out, std::span<const PermitRecord> permits);
void write_incidents_csv(std::ostream& out, std::span<const IncidentRecord> incidents);

} // namespace citysig

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "citysig/date.hpp"
#include "citysig/work_type.hpp"

#include <json.hpp>

namespace citysig {

// Optional row-level filter: keep only rows whose `column` value is in
// `allow`; everything else is rejected with reason "filtered".
struct RowFilter {
    std::string column;
    std::vector<std::string> allow;
};

// Describes how the columns of a raw delimited file map onto the canonical
// record fields, plus the dictionary translating raw work-type strings to
// the eight canonical values. Loaded from a small JSON file; see
// configs/ for ready-made NYC DOB and FDNY layouts.
struct ColumnMapping {
    char delimiter = ',';
    DateFormat date_format = DateFormat::iso;
    std::map<std::string, std::string> columns;   // canonical field -> source column name
    std::map<std::string, WorkType> work_types;   // raw string (trimmed) -> canonical type
    std::optional<RowFilter> row_filter;

    const std::string* column_for(const std::string& field) const;

    static ColumnMapping from_json(const nlohmann::json& j);
    static ColumnMapping load(const std::string& path);

    // Identity mappings for the canonical CSV schemas this project itself
    // emits (clean exports and synthetic cities).
    static ColumnMapping canonical_permits();
    static ColumnMapping canonical_incidents();
};

} // namespace citysig

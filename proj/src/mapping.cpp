#include "citysig/mapping.hpp"

#include <fstream>

#include "citysig/csv.hpp"
#include "citysig/error.hpp"

namespace citysig {

const std::string* ColumnMapping::column_for(const std::string& field) const {
    auto it = columns.find(field);
    return it == columns.end() ? nullptr : &it->second;
}

ColumnMapping ColumnMapping::from_json(const nlohmann::json& j) {
    ColumnMapping m;
    if (j.contains("delimiter")) {
        const auto d = j.at("delimiter").get<std::string>();
        if (d.size() != 1) throw_config("bad_mapping", "delimiter must be a single character");
        m.delimiter = d[0];
    }
    if (j.contains("date_format")) {
        const auto f = j.at("date_format").get<std::string>();
        if (f == "iso") m.date_format = DateFormat::iso;
        else if (f == "us") m.date_format = DateFormat::us;
        else throw_config("bad_mapping", "date_format must be \"iso\" or \"us\", got \"" + f + "\"");
    }
    if (!j.contains("columns") || !j.at("columns").is_object())
        throw_config("bad_mapping", "mapping requires a \"columns\" object");
    for (const auto& [field, col] : j.at("columns").items()) {
        if (!col.is_string()) throw_config("bad_mapping", "column for field \"" + field + "\" must be a string");
        m.columns[field] = col.get<std::string>();
    }
    if (j.contains("work_types")) {
        for (const auto& [raw, canonical] : j.at("work_types").items()) {
            auto t = work_type_from_name(canonical.get<std::string>());
            if (!t)
                throw_config("bad_mapping", "unknown canonical work type \"" +
                                                canonical.get<std::string>() + "\" for raw value \"" + raw + "\"");
            m.work_types[std::string(trim_view(raw))] = *t;
        }
    }
    if (j.contains("row_filter")) {
        RowFilter f;
        f.column = j.at("row_filter").at("column").get<std::string>();
        for (const auto& v : j.at("row_filter").at("allow")) f.allow.push_back(v.get<std::string>());
        m.row_filter = std::move(f);
    }
    return m;
}

ColumnMapping ColumnMapping::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_config("io_error", "cannot open mapping file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw_config("bad_mapping", "invalid JSON in " + path + ": " + e.what());
    }
    return from_json(j);
}

ColumnMapping ColumnMapping::canonical_permits() {
    ColumnMapping m;
    m.date_format = DateFormat::iso;
    m.columns = {
        {"zone_id", "zone_id"},
        {"borough", "borough"},
        {"work_type", "work_type"},
        {"work_subtype", "work_subtype"},
        {"start_date", "start_date"},
        {"expiration_date", "expiration_date"},
    };
    for (int i = 0; i < kWorkTypeCount; ++i) {
        auto t = static_cast<WorkType>(i);
        m.work_types[std::string(work_type_name(t))] = t;
    }
    return m;
}

ColumnMapping ColumnMapping::canonical_incidents() {
    ColumnMapping m;
    m.date_format = DateFormat::iso;
    m.columns = {
        {"zone_id", "zone_id"},
        {"timestamp", "timestamp"},
        {"response_time_s", "response_time_s"},
    };
    return m;
}

} // namespace citysig

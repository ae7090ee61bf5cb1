#pragma once

#include <optional>
#include <string>

#include "citysig/date.hpp"
#include "citysig/work_type.hpp"

namespace citysig {

// One normalized permit row. zone_id is exactly five decimal digits; when
// expiration_date is present, start_date <= expiration_date.
struct PermitRecord {
    std::string zone_id;
    std::string borough; // free text, may be empty
    WorkType work_type = WorkType::new_building;
    std::string work_subtype; // free text, kept as metadata only
    Date start_date;
    std::optional<Date> expiration_date;
};

// One normalized incident row. response_time_s >= 0.
struct IncidentRecord {
    std::string zone_id;
    DateTime timestamp;
    double response_time_s = 0.0;
};

} // namespace citysig

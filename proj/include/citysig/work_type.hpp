#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace citysig {

// The eight canonical permit work types. The enumerator order is the fixed
// column order of every signature vector and CSV header in the project;
// changing it would silently reshuffle all persisted artifacts.
enum class WorkType : int {
    new_building = 0,
    foundation,
    construction_equipment,
    demolition,
    alteration,
    equipment_work,
    plumbing,
    signage,
};

inline constexpr int kWorkTypeCount = 8;

inline constexpr std::array<std::string_view, kWorkTypeCount> kWorkTypeNames = {
    "new_building",  "foundation", "construction_equipment", "demolition",
    "alteration",    "equipment_work", "plumbing",           "signage",
};

constexpr std::string_view work_type_name(WorkType t) {
    return kWorkTypeNames[static_cast<int>(t)];
}

std::optional<WorkType> work_type_from_name(std::string_view name);

} // namespace citysig

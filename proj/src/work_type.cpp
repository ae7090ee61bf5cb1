#include "citysig/work_type.hpp"

namespace citysig {

std::optional<WorkType> work_type_from_name(std::string_view name) {
    for (int i = 0; i < kWorkTypeCount; ++i) {
        if (kWorkTypeNames[i] == name) return static_cast<WorkType>(i);
    }
    return std::nullopt;
}

} // namespace citysig

#pragma once

#include <array>
#include <string>
#include <string_view>

#include "tracer/errors.hpp"

namespace tracer {

// The four-way contamination label set.
enum class ContaminationLabel { FI, NI, SL, U };

inline constexpr std::array<ContaminationLabel, 4> all_labels = {
    ContaminationLabel::FI, ContaminationLabel::NI, ContaminationLabel::SL,
    ContaminationLabel::U};

inline std::string_view to_string(ContaminationLabel label) {
    switch (label) {
        case ContaminationLabel::FI: return "FI";
        case ContaminationLabel::NI: return "NI";
        case ContaminationLabel::SL: return "SL";
        case ContaminationLabel::U: return "U";
    }
    throw error("invalid contamination label value");
}

inline ContaminationLabel label_from_string(std::string_view s) {
    if (s == "FI") return ContaminationLabel::FI;
    if (s == "NI") return ContaminationLabel::NI;
    if (s == "SL") return ContaminationLabel::SL;
    if (s == "U") return ContaminationLabel::U;
    throw data_error("unknown contamination label: " + std::string(s));
}

inline std::size_t label_index(ContaminationLabel label) {
    return static_cast<std::size_t>(label);
}

}  // namespace tracer

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "tracer/bm25.hpp"
#include "tracer/errors.hpp"
#include "tracer/labels.hpp"

namespace tracer {

// Min-max normalization over the evaluated pair set. Raw BM25 scores are
// unbounded, so they are rescaled to [0,1] before the tuned threshold is
// applied. All-equal scores cannot be rescaled; callers get the flag and
// every pair classified non-contaminated.
struct MinMaxResult {
    std::vector<double> normalized;
    bool degenerate = false;
};

inline MinMaxResult minmax_normalize(const std::vector<double>& raw) {
    MinMaxResult out;
    if (raw.empty()) return out;
    auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    double lo = *lo_it, hi = *hi_it;
    if (hi <= lo) {
        out.degenerate = true;
        out.normalized.assign(raw.size(), 0.0);
        return out;
    }
    out.normalized.reserve(raw.size());
    for (double x : raw) out.normalized.push_back((x - lo) / (hi - lo));
    return out;
}

struct BinaryClassification {
    std::vector<bool> contaminated;
    bool degenerate_normalization = false;
};

// Contaminated iff the normalized score strictly exceeds the threshold.
inline BinaryClassification bm25_classify(const std::vector<double>& raw_scores,
                                          double threshold) {
    auto norm = minmax_normalize(raw_scores);
    BinaryClassification out;
    out.degenerate_normalization = norm.degenerate;
    out.contaminated.reserve(raw_scores.size());
    for (double s : norm.normalized) out.contaminated.push_back(s > threshold);
    return out;
}

// Three decision thresholds for the fine-grained threshold-only classifier.
struct FineThresholds {
    double t1 = 0.86;
    double t2 = 0.75;
    double t3 = 0.71;
};

inline void validate(const FineThresholds& th) {
    if (!(1.0 >= th.t1 && th.t1 > th.t2 && th.t2 > th.t3 && th.t3 >= 0.0)) {
        throw config_error("invalid fine thresholds: require 1 >= t1 > t2 > t3 >= 0, got (" +
                           std::to_string(th.t1) + ", " + std::to_string(th.t2) + ", " +
                           std::to_string(th.t3) + ")");
    }
}

// sigma > t1 -> FI; t2 < sigma <= t1 -> NI; t3 < sigma <= t2 -> SL; else U.
inline ContaminationLabel threshold_only_fine(double sigma, const FineThresholds& th) {
    if (sigma > th.t1) return ContaminationLabel::FI;
    if (sigma > th.t2) return ContaminationLabel::NI;
    if (sigma > th.t3) return ContaminationLabel::SL;
    return ContaminationLabel::U;
}

// Contaminated iff sigma strictly exceeds the threshold.
inline bool threshold_only_binary(double sigma, double threshold) {
    if (!(0.0 <= threshold && threshold <= 1.0)) {
        throw config_error("binary threshold must be in [0,1]");
    }
    return sigma > threshold;
}

}  // namespace tracer

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "tracer/baselines.hpp"
#include "tracer/errors.hpp"
#include "tracer/labels.hpp"
#include "tracer/metrics.hpp"
#include "tracer/triage.hpp"

namespace tracer {

// A development pair: similarity score plus its gold label.
struct ScoredGold {
    double sigma = 0.0;
    ContaminationLabel gold = ContaminationLabel::U;
};

// Grid values i*step for i = 0.. while i*step <= 1 (within epsilon).
inline std::vector<double> threshold_grid(double step) {
    if (!(step > 0.0 && step <= 1.0)) throw config_error("grid step must be in (0,1]");
    std::vector<double> grid;
    for (std::size_t i = 0;; ++i) {
        double v = static_cast<double>(i) * step;
        if (v > 1.0 + 1e-12) break;
        grid.push_back(std::min(v, 1.0));
    }
    return grid;
}

namespace detail {

// Binary F1 when predicting contaminated iff sigma > threshold; 0/0 -> 0.
inline double binary_f1_at(const std::vector<ScoredGold>& dev, double threshold) {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (const auto& d : dev) {
        bool gold_c = binary_reduce(d.gold);
        bool pred_c = d.sigma > threshold;
        if (pred_c && gold_c) ++tp;
        else if (pred_c && !gold_c) ++fp;
        else if (!pred_c && gold_c) ++fn;
    }
    double p = safe_div(tp, tp + fp);
    double r = safe_div(tp, tp + fn);
    return f1_of(p, r);
}

// Macro-F1 of the fine-grained threshold-only classifier on the dev set.
inline double fine_macro_f1_at(const std::vector<ScoredGold>& dev, const FineThresholds& th) {
    ConfusionMatrix m;
    for (const auto& d : dev) m.at(d.gold, threshold_only_fine(d.sigma, th)) += 1;
    return prf(m).macro_f1;
}

}  // namespace detail

struct TriageTuneInput {
    std::vector<ScoredGold> dev;
    double recall_floor = 0.9;
    double precision_floor = 0.9;
    double step = 0.05;
};

// Grid row emitted alongside tuned thresholds so the search is plottable.
struct GridRow {
    std::vector<double> thresholds;
    double value = 0.0;  // recall, precision, F1 or macro-F1 depending on the tuner
    bool feasible = true;
};

struct TriageTuneResult {
    TriageThresholds thresholds;
    std::vector<GridRow> low_grid;   // (tau_low candidate, recall kept)
    std::vector<GridRow> high_grid;  // (tau_high candidate, precision in region)
};

// tau_low: largest grid value whose auto-U region (sigma <= tau_low) keeps
// recall over gold-contaminated pairs >= recall_floor. tau_high: smallest
// grid value whose auto-FI region (sigma >= tau_high) has precision over
// gold-FI >= precision_floor. Ties break toward more pruning. Regions with
// no members count as vacuously satisfying their floor.
inline TriageTuneResult tune_triage(const TriageTuneInput& input) {
    if (input.dev.empty()) throw data_error("tune_triage: empty development set");
    auto grid = threshold_grid(input.step);

    std::uint64_t contaminated_total = 0;
    for (const auto& d : input.dev) {
        if (binary_reduce(d.gold)) ++contaminated_total;
    }

    TriageTuneResult result;
    bool low_found = false;
    double best_recall = 0.0;
    for (double g : grid) {
        std::uint64_t kept = 0;
        for (const auto& d : input.dev) {
            if (binary_reduce(d.gold) && d.sigma > g) ++kept;
        }
        double recall = contaminated_total == 0
                            ? 1.0
                            : static_cast<double>(kept) / static_cast<double>(contaminated_total);
        best_recall = std::max(best_recall, recall);
        bool ok = recall >= input.recall_floor;
        result.low_grid.push_back({{g}, recall, ok});
        if (ok) {
            result.thresholds.tau_low = g;  // grid ascends; keep the largest
            low_found = true;
        }
    }
    if (!low_found) {
        throw data_error("tune_triage: no grid value keeps recall >= " +
                         std::to_string(input.recall_floor) +
                         "; best achievable recall is " + std::to_string(best_recall));
    }

    bool high_found = false;
    double best_precision = 0.0;
    for (double g : grid) {
        std::uint64_t region = 0, fi = 0;
        for (const auto& d : input.dev) {
            if (d.sigma >= g) {
                ++region;
                if (d.gold == ContaminationLabel::FI) ++fi;
            }
        }
        double precision =
            region == 0 ? 1.0 : static_cast<double>(fi) / static_cast<double>(region);
        best_precision = std::max(best_precision, precision);
        bool ok = precision >= input.precision_floor;
        result.high_grid.push_back({{g}, precision, ok});
        if (ok && !high_found) {
            result.thresholds.tau_high = g;  // keep the smallest
            high_found = true;
        }
    }
    if (!high_found) {
        throw data_error("tune_triage: no grid value reaches precision >= " +
                         std::to_string(input.precision_floor) +
                         "; best achievable precision is " + std::to_string(best_precision));
    }
    return result;
}

struct BinaryTuneResult {
    double threshold = 0.0;
    double f1 = 0.0;
    std::vector<GridRow> grid;
};

// Grid value maximizing binary F1; ties go to the smallest threshold.
inline BinaryTuneResult tune_binary_threshold(const std::vector<ScoredGold>& dev, double step) {
    if (dev.empty()) throw data_error("tune_binary_threshold: empty development set");
    BinaryTuneResult result;
    result.f1 = -1.0;
    for (double g : threshold_grid(step)) {
        double f1 = detail::binary_f1_at(dev, g);
        result.grid.push_back({{g}, f1, true});
        if (f1 > result.f1) {
            result.f1 = f1;
            result.threshold = g;
        }
    }
    return result;
}

struct FineTuneResult {
    FineThresholds thresholds;
    double macro_f1 = 0.0;
    std::vector<GridRow> grid;
};

// Exhaustive search over strictly ordered grid triples t1 > t2 > t3,
// maximizing macro-F1; ties go to the lexicographically smallest triple.
inline FineTuneResult tune_fine_thresholds(const std::vector<ScoredGold>& dev, double step,
                                           bool keep_grid = true) {
    if (dev.empty()) throw data_error("tune_fine_thresholds: empty development set");
    auto grid = threshold_grid(step);
    FineTuneResult result;
    result.macro_f1 = -1.0;
    bool found = false;
    for (std::size_t i3 = 0; i3 < grid.size(); ++i3) {
        for (std::size_t i2 = i3 + 1; i2 < grid.size(); ++i2) {
            for (std::size_t i1 = i2 + 1; i1 < grid.size(); ++i1) {
                FineThresholds th{grid[i1], grid[i2], grid[i3]};
                double f1 = detail::fine_macro_f1_at(dev, th);
                if (keep_grid) result.grid.push_back({{th.t1, th.t2, th.t3}, f1, true});
                auto key = std::make_tuple(th.t1, th.t2, th.t3);
                auto best = std::make_tuple(result.thresholds.t1, result.thresholds.t2,
                                            result.thresholds.t3);
                if (f1 > result.macro_f1 || (f1 == result.macro_f1 && found && key < best)) {
                    result.macro_f1 = f1;
                    result.thresholds = th;
                    found = true;
                }
            }
        }
    }
    if (!found) {
        throw data_error("tune_fine_thresholds: grid too coarse for three ordered thresholds");
    }
    return result;
}

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

// Precision/recall of the binary reduction at every grid threshold
// (predict contaminated iff sigma > threshold). 0/0 -> 0.
inline std::vector<PrPoint> pr_curve(const std::vector<ScoredGold>& scores, double step) {
    std::vector<PrPoint> curve;
    for (double g : threshold_grid(step)) {
        std::uint64_t tp = 0, fp = 0, fn = 0;
        for (const auto& s : scores) {
            bool gold_c = binary_reduce(s.gold);
            bool pred_c = s.sigma > g;
            if (pred_c && gold_c) ++tp;
            else if (pred_c && !gold_c) ++fp;
            else if (!pred_c && gold_c) ++fn;
        }
        curve.push_back({g, detail::safe_div(tp, tp + fp), detail::safe_div(tp, tp + fn)});
    }
    return curve;
}

}  // namespace tracer

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tracer/corpus.hpp"
#include "tracer/errors.hpp"
#include "tracer/labels.hpp"
#include "tracer/verify.hpp"

namespace tracer {

// FI, NI, SL -> contaminated; U -> non-contaminated.
inline bool binary_reduce(ContaminationLabel label) {
    return label != ContaminationLabel::U;
}

// 4x4 counts indexed (gold, predicted).
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, 4>, 4> counts{};

    std::uint64_t& at(ContaminationLabel gold, ContaminationLabel pred) {
        return counts[label_index(gold)][label_index(pred)];
    }
    std::uint64_t at(ContaminationLabel gold, ContaminationLabel pred) const {
        return counts[label_index(gold)][label_index(pred)];
    }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto& row : counts)
            for (auto c : row) t += c;
        return t;
    }
};

// Tally of reported labels against gold. Predictions must cover the gold
// pair set exactly once each; trivially-filtered verdicts count as U via
// reported_label().
inline ConfusionMatrix confusion(const std::vector<GoldLabel>& gold,
                                 const std::vector<Verdict>& pred) {
    std::map<std::pair<std::string, std::string>, ContaminationLabel> by_pair;
    for (const auto& v : pred) {
        auto key = std::make_pair(v.pair.test_id, v.pair.train_id);
        if (!by_pair.emplace(key, v.reported_label()).second) {
            throw data_error("confusion: duplicate prediction for pair (" + v.pair.test_id +
                             ", " + v.pair.train_id + ")");
        }
    }
    ConfusionMatrix m;
    for (const auto& g : gold) {
        auto it = by_pair.find({g.pair.test_id, g.pair.train_id});
        if (it == by_pair.end()) {
            throw data_error("confusion: missing prediction for pair (" + g.pair.test_id + ", " +
                             g.pair.train_id + ")");
        }
        m.at(g.label, it->second) += 1;
    }
    return m;
}

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
};

struct BinaryMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct MetricsReport {
    std::array<ClassMetrics, 4> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    BinaryMetrics binary;
    std::vector<std::string> warnings;  // 0/0 cells resolved to 0

    const ClassMetrics& for_label(ContaminationLabel l) const {
        return per_class[label_index(l)];
    }
};

namespace detail {
inline double safe_div(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline double f1_of(double p, double r) {
    return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}
}  // namespace detail

// Per-class and macro P/R/F1 plus the binary reduction. 0/0 cells resolve to
// 0 and are listed in warnings.
inline MetricsReport prf(const ConfusionMatrix& m) {
    MetricsReport report;
    double sum_p = 0.0, sum_r = 0.0, sum_f = 0.0;
    for (auto label : all_labels) {
        std::size_t c = label_index(label);
        std::uint64_t tp = m.counts[c][c];
        std::uint64_t fp = 0, fn = 0;
        for (std::size_t other = 0; other < 4; ++other) {
            if (other == c) continue;
            fp += m.counts[other][c];
            fn += m.counts[c][other];
        }
        ClassMetrics& cm = report.per_class[c];
        cm.support = tp + fn;
        if (tp + fp == 0) {
            report.warnings.push_back("precision 0/0 for class " +
                                      std::string(to_string(label)) + ", reported as 0");
        }
        if (tp + fn == 0) {
            report.warnings.push_back("recall 0/0 for class " + std::string(to_string(label)) +
                                      ", reported as 0");
        }
        cm.precision = detail::safe_div(tp, tp + fp);
        cm.recall = detail::safe_div(tp, tp + fn);
        cm.f1 = detail::f1_of(cm.precision, cm.recall);
        sum_p += cm.precision;
        sum_r += cm.recall;
        sum_f += cm.f1;
    }
    report.macro_precision = sum_p / 4.0;
    report.macro_recall = sum_r / 4.0;
    report.macro_f1 = sum_f / 4.0;

    BinaryMetrics& b = report.binary;
    for (auto g : all_labels) {
        for (auto p : all_labels) {
            std::uint64_t n = m.at(g, p);
            bool gc = binary_reduce(g), pc = binary_reduce(p);
            if (gc && pc) b.tp += n;
            else if (!gc && pc) b.fp += n;
            else if (gc && !pc) b.fn += n;
            else b.tn += n;
        }
    }
    b.precision = detail::safe_div(b.tp, b.tp + b.fp);
    b.recall = detail::safe_div(b.tp, b.tp + b.fn);
    b.f1 = detail::f1_of(b.precision, b.recall);
    return report;
}

// Chance-corrected agreement with the expected-agreement term computed from
// the pooled marginal distribution of both raters, which makes the two-item
// total-disagreement fixture come out at exactly -1.
template <typename Label>
double cohen_kappa(const std::vector<Label>& a, const std::vector<Label>& b) {
    if (a.size() != b.size()) {
        throw data_error("cohen_kappa: length mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    }
    if (a.empty()) throw data_error("cohen_kappa: empty label lists");

    std::map<Label, std::uint64_t> pooled;
    std::uint64_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        pooled[a[i]] += 1;
        pooled[b[i]] += 1;
        if (a[i] == b[i]) ++agree;
    }
    double n = static_cast<double>(a.size());
    double p_o = static_cast<double>(agree) / n;
    double p_e = 0.0;
    for (const auto& [label, count] : pooled) {
        double share = static_cast<double>(count) / (2.0 * n);
        p_e += share * share;
    }
    if (p_e >= 1.0) return p_o >= 1.0 ? 1.0 : 0.0;  // both raters constant on one label
    return (p_o - p_e) / (1.0 - p_e);
}

inline json metrics_to_json(const MetricsReport& r) {
    json per_class = json::object();
    for (auto label : all_labels) {
        const auto& cm = r.for_label(label);
        per_class[std::string(to_string(label))] = {{"precision", cm.precision},
                                                    {"recall", cm.recall},
                                                    {"f1", cm.f1},
                                                    {"support", cm.support}};
    }
    return {{"per_class", per_class},
            {"macro", {{"precision", r.macro_precision},
                       {"recall", r.macro_recall},
                       {"f1", r.macro_f1}}},
            {"binary", {{"precision", r.binary.precision},
                        {"recall", r.binary.recall},
                        {"f1", r.binary.f1},
                        {"tp", r.binary.tp},
                        {"fp", r.binary.fp},
                        {"fn", r.binary.fn},
                        {"tn", r.binary.tn}}},
            {"warnings", r.warnings}};
}

}  // namespace tracer

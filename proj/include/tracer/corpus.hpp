#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tracer/errors.hpp"
#include "tracer/jsonl.hpp"
#include "tracer/labels.hpp"
#include "tracer/rng.hpp"

namespace tracer {

struct Task {
    std::string id;
    std::string dataset_id;
    std::string description;
    std::optional<std::string> solution;
    std::optional<std::string> normalized_description;

    // Text the downstream stages operate on: the normalized rewrite when
    // present, else the raw description.
    const std::string& working_text() const {
        return normalized_description ? *normalized_description : description;
    }
};

enum class DatasetRole { benchmark, post_training };

inline std::string_view to_string(DatasetRole role) {
    return role == DatasetRole::benchmark ? "benchmark" : "post_training";
}

inline DatasetRole role_from_string(std::string_view s) {
    if (s == "benchmark") return DatasetRole::benchmark;
    if (s == "post_training") return DatasetRole::post_training;
    throw config_error("unknown dataset role: " + std::string(s));
}

struct Dataset {
    std::string dataset_id;
    DatasetRole role = DatasetRole::benchmark;
    std::vector<Task> tasks;

    std::size_t size() const { return tasks.size(); }

    const Task& task_by_id(const std::string& id) const {
        for (const auto& t : tasks) {
            if (t.id == id) return t;
        }
        throw data_error("no task '" + id + "' in dataset '" + dataset_id + "'");
    }
};

inline std::string make_combination_id(const std::string& benchmark_id,
                                       const std::string& corpus_id) {
    return benchmark_id + "×" + corpus_id;
}

struct TaskPair {
    std::string test_id;
    std::string train_id;
    std::string combination_id;

    friend bool operator==(const TaskPair&, const TaskPair&) = default;
};

// Stable pair identity within one combination.
inline bool pair_id_less(const TaskPair& a, const TaskPair& b) {
    return std::tie(a.combination_id, a.test_id, a.train_id) <
           std::tie(b.combination_id, b.test_id, b.train_id);
}

struct GoldLabel {
    TaskPair pair;
    ContaminationLabel label = ContaminationLabel::U;
    std::vector<ContaminationLabel> annotator_labels;
};

// How one line-delimited source file maps onto the task model. The source
// datasets use heterogeneous schemas, so the mapping is configuration.
struct IngestSchema {
    std::string dataset_id;
    std::string id_field = "id";
    std::string description_field = "description";
    std::optional<std::string> solution_field;
};

namespace detail {
inline std::string field_as_string(const json& record, const std::string& field,
                                   const std::string& where) {
    if (!record.contains(field)) {
        throw data_error(where + ": malformed record (missing field '" + field + "')");
    }
    const json& v = record.at(field);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    throw data_error(where + ": malformed record (field '" + field +
                     "' is neither string nor integer)");
}
}  // namespace detail

// Reads one task per input line, in input order. Duplicate ids and empty
// descriptions are rejected with the offending line number.
inline Dataset ingest(const std::filesystem::path& path, const IngestSchema& schema,
                      DatasetRole role) {
    Dataset ds;
    ds.dataset_id = schema.dataset_id;
    ds.role = role;
    std::unordered_set<std::string> seen;
    read_jsonl(path, [&](const json& record, std::size_t line_no) {
        std::string where = path.string() + ":" + std::to_string(line_no);
        Task t;
        t.dataset_id = schema.dataset_id;
        t.id = detail::field_as_string(record, schema.id_field, where);
        if (t.id.empty()) throw data_error(where + ": malformed record (empty id)");
        t.description = detail::field_as_string(record, schema.description_field, where);
        if (trim_copy(t.description).empty()) {
            throw data_error(where + ": malformed record (empty description)");
        }
        if (schema.solution_field && record.contains(*schema.solution_field)) {
            t.solution = detail::field_as_string(record, *schema.solution_field, where);
        }
        if (!seen.insert(t.id).second) {
            throw data_error(where + ": duplicate id '" + t.id + "' in dataset '" +
                             schema.dataset_id + "'");
        }
        ds.tasks.push_back(std::move(t));
    });
    return ds;
}

// Streams the full cross product without materializing it.
inline void for_each_pair(const Dataset& bench, const Dataset& train,
                          const std::function<void(const TaskPair&)>& fn) {
    if (bench.role != DatasetRole::benchmark) {
        throw data_error("enumerate_pairs: '" + bench.dataset_id + "' is not a benchmark");
    }
    if (train.role != DatasetRole::post_training) {
        throw data_error("enumerate_pairs: '" + train.dataset_id +
                         "' is not a post-training corpus");
    }
    std::string combo = make_combination_id(bench.dataset_id, train.dataset_id);
    TaskPair p;
    p.combination_id = combo;
    for (const auto& bt : bench.tasks) {
        p.test_id = bt.id;
        for (const auto& tt : train.tasks) {
            p.train_id = tt.id;
            fn(p);
        }
    }
}

inline std::uint64_t pair_count(const Dataset& bench, const Dataset& train) {
    if (bench.role != DatasetRole::benchmark || train.role != DatasetRole::post_training) {
        throw data_error("enumerate_pairs: role mismatch");
    }
    return static_cast<std::uint64_t>(bench.size()) * train.size();
}

namespace detail {
// Pools are sorted before drawing, so the draw is a pure function of
// (pair set, seed) regardless of input order.
inline std::vector<TaskPair> sorted_pool(std::vector<TaskPair> pool) {
    std::sort(pool.begin(), pool.end(), pair_id_less);
    return pool;
}

inline std::mt19937_64 combination_engine(std::uint64_t seed, const std::string& combination_id,
                                          std::uint64_t stream) {
    return std::mt19937_64(mix_seed(seed, fnv1a64(combination_id), stream));
}
}  // namespace detail

// Uniform draw of n_per pairs per combination, without replacement.
// Combinations are processed in lexicographic order; within each, a partial
// Fisher-Yates over the sorted pool driven by mt19937_64 with rejection
// sampling, so the output is bit-identical across platforms for a seed.
inline std::vector<TaskPair> stratified_sample(
    const std::map<std::string, std::vector<TaskPair>>& pools, std::size_t n_per,
    std::uint64_t seed) {
    std::vector<TaskPair> out;
    for (const auto& [combo, raw_pool] : pools) {
        if (raw_pool.size() < n_per) {
            throw data_error("stratified_sample: pool for combination '" + combo + "' has " +
                             std::to_string(raw_pool.size()) + " pairs, need " +
                             std::to_string(n_per));
        }
        std::vector<TaskPair> pool = detail::sorted_pool(raw_pool);
        auto engine = detail::combination_engine(seed, combo, /*stream=*/1);
        for (std::size_t i = 0; i < n_per; ++i) {
            std::size_t j = i + static_cast<std::size_t>(bounded_draw(engine, pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        out.insert(out.end(), pool.begin(), pool.begin() + n_per);
    }
    return out;
}

struct DevTestSplit {
    std::vector<TaskPair> dev;
    std::vector<TaskPair> test;
};

// Per combination: shuffle, first dev_per_combination pairs to dev, rest to
// test. Uses a distinct RNG stream from stratified_sample.
inline DevTestSplit split_dev_test(const std::vector<TaskPair>& sampled,
                                   std::size_t dev_per_combination, std::uint64_t seed) {
    std::map<std::string, std::vector<TaskPair>> by_combo;
    for (const auto& p : sampled) by_combo[p.combination_id].push_back(p);

    DevTestSplit split;
    for (auto& [combo, pool] : by_combo) {
        if (pool.size() < dev_per_combination) {
            throw data_error("split_dev_test: combination '" + combo + "' has " +
                             std::to_string(pool.size()) + " pairs, need at least " +
                             std::to_string(dev_per_combination));
        }
        std::sort(pool.begin(), pool.end(), pair_id_less);
        auto engine = detail::combination_engine(seed, combo, /*stream=*/2);
        deterministic_shuffle(pool, engine);
        split.dev.insert(split.dev.end(), pool.begin(), pool.begin() + dev_per_combination);
        split.test.insert(split.test.end(), pool.begin() + dev_per_combination, pool.end());
    }
    return split;
}

struct LabelStats {
    std::size_t count = 0;
    double fraction = 0.0;
};

// Counts per label; fractions are 0 for empty input.
inline std::map<ContaminationLabel, LabelStats> label_distribution(
    const std::vector<GoldLabel>& gold) {
    std::map<ContaminationLabel, LabelStats> dist;
    for (auto label : all_labels) dist[label] = LabelStats{};
    for (const auto& g : gold) dist[g.label].count += 1;
    if (!gold.empty()) {
        for (auto& [label, stats] : dist) {
            stats.fraction = static_cast<double>(stats.count) / gold.size();
        }
    }
    return dist;
}

// GoldLabel file: one record per line with test_id, train_id, label and
// optional annotator_labels / combination.
inline std::vector<GoldLabel> load_gold_labels(const std::filesystem::path& path) {
    std::vector<GoldLabel> gold;
    read_jsonl(path, [&](const json& record, std::size_t line_no) {
        std::string where = path.string() + ":" + std::to_string(line_no);
        GoldLabel g;
        g.pair.test_id = detail::field_as_string(record, "test_id", where);
        g.pair.train_id = detail::field_as_string(record, "train_id", where);
        if (record.contains("combination")) {
            g.pair.combination_id = record.at("combination").get<std::string>();
        }
        g.label = label_from_string(detail::field_as_string(record, "label", where));
        if (record.contains("annotator_labels")) {
            for (const auto& a : record.at("annotator_labels")) {
                g.annotator_labels.push_back(label_from_string(a.get<std::string>()));
            }
        }
        gold.push_back(std::move(g));
    });
    return gold;
}

inline void save_pairs(const std::vector<TaskPair>& pairs, const std::filesystem::path& path) {
    jsonl_writer out(path, /*append=*/false);
    for (const auto& p : pairs) {
        out.write(json{{"test_id", p.test_id},
                       {"train_id", p.train_id},
                       {"combination", p.combination_id}});
    }
}

inline std::vector<TaskPair> load_pairs(const std::filesystem::path& path) {
    std::vector<TaskPair> pairs;
    read_jsonl(path, [&](const json& record, std::size_t line_no) {
        std::string where = path.string() + ":" + std::to_string(line_no);
        TaskPair p;
        p.test_id = detail::field_as_string(record, "test_id", where);
        p.train_id = detail::field_as_string(record, "train_id", where);
        if (record.contains("combination")) {
            p.combination_id = record.at("combination").get<std::string>();
        }
        pairs.push_back(std::move(p));
    });
    return pairs;
}

}  // namespace tracer

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "tracer/corpus.hpp"
#include "tracer/errors.hpp"
#include "tracer/gateway.hpp"

namespace tracer {

struct PairScore {
    TaskPair pair;
    double sigma = 0.0;

    friend bool operator==(const PairScore&, const PairScore&) = default;
};

struct TriageThresholds {
    double tau_low = 0.6;
    double tau_high = 0.9;
};

inline void validate(const TriageThresholds& th) {
    if (!(0.0 <= th.tau_low && th.tau_low < th.tau_high && th.tau_high <= 1.0)) {
        throw config_error("invalid triage thresholds: require 0 <= tau_low < tau_high <= 1, got (" +
                           std::to_string(th.tau_low) + ", " + std::to_string(th.tau_high) + ")");
    }
}

// Cosine similarity clamped to [0,1]. The lower clamp maps anti-correlated
// vectors to 0; the upper clamp only absorbs floating-point overshoot.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.values.size() != b.values.size()) {
        throw data_error("cosine: dimension mismatch (" + std::to_string(a.values.size()) +
                         " vs " + std::to_string(b.values.size()) + ")");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) throw data_error("cosine: zero vector");
    double sim = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(sim, 0.0, 1.0);
}

// Embeddings aligned with a dataset's task order.
struct EmbeddingMatrix {
    std::string dataset_id;
    std::vector<EmbeddingVector> rows;
};

// Exact all-pairs scoring, streamed to the sink in tiles of training rows so
// memory stays bounded by one tile regardless of corpus size.
inline void score_all(const Dataset& bench, const Dataset& train, const EmbeddingMatrix& bench_vecs,
                      const EmbeddingMatrix& train_vecs,
                      const std::function<void(const PairScore&)>& sink,
                      std::size_t tile_size = 1024) {
    if (bench_vecs.rows.size() != bench.size()) {
        throw data_error("score_all: missing embeddings for benchmark '" + bench.dataset_id + "'");
    }
    if (train_vecs.rows.size() != train.size()) {
        throw data_error("score_all: missing embeddings for corpus '" + train.dataset_id + "'");
    }
    if (tile_size == 0) tile_size = 1;

    std::string combo = make_combination_id(bench.dataset_id, train.dataset_id);
    PairScore ps;
    ps.pair.combination_id = combo;
    for (std::size_t j0 = 0; j0 < train.size(); j0 += tile_size) {
        std::size_t j1 = std::min(train.size(), j0 + tile_size);
        for (std::size_t i = 0; i < bench.size(); ++i) {
            ps.pair.test_id = bench.tasks[i].id;
            for (std::size_t j = j0; j < j1; ++j) {
                ps.pair.train_id = train.tasks[j].id;
                ps.sigma = cosine(bench_vecs.rows[i], train_vecs.rows[j]);
                sink(ps);
            }
        }
    }
}

struct TriagePartition {
    std::vector<PairScore> auto_fi;    // sigma >= tau_high
    std::vector<PairScore> ambiguous;  // tau_low < sigma < tau_high
    std::vector<PairScore> auto_u;     // sigma <= tau_low
    TriageThresholds thresholds;

    std::size_t total() const { return auto_fi.size() + ambiguous.size() + auto_u.size(); }
};

// Streaming accumulator for the three-region partition.
class PartitionAccumulator {
  public:
    explicit PartitionAccumulator(TriageThresholds th) {
        validate(th);
        partition_.thresholds = th;
    }

    void add(const PairScore& score) {
        if (score.sigma >= partition_.thresholds.tau_high) {
            partition_.auto_fi.push_back(score);
        } else if (score.sigma <= partition_.thresholds.tau_low) {
            partition_.auto_u.push_back(score);
        } else {
            partition_.ambiguous.push_back(score);
        }
    }

    TriagePartition take() { return std::move(partition_); }

  private:
    TriagePartition partition_;
};

inline TriagePartition partition(const std::vector<PairScore>& scores, TriageThresholds th) {
    PartitionAccumulator acc(th);
    for (const auto& s : scores) acc.add(s);
    return acc.take();
}

// Benchmark-construction pool: strictly above the floor.
inline std::vector<TaskPair> candidate_pool(const std::vector<PairScore>& scores, double floor) {
    if (!(0.0 <= floor && floor <= 1.0)) throw config_error("candidate floor must be in [0,1]");
    std::vector<TaskPair> pool;
    for (const auto& s : scores) {
        if (s.sigma > floor) pool.push_back(s.pair);
    }
    return pool;
}

// Score file line with sigma pinned to 6 decimal places.
inline std::string score_line(const PairScore& s) {
    char sigma[16];
    std::snprintf(sigma, sizeof(sigma), "%.6f", s.sigma);
    return std::string("{\"test_id\":") + json(s.pair.test_id).dump() +
           ",\"train_id\":" + json(s.pair.train_id).dump() +
           ",\"combination\":" + json(s.pair.combination_id).dump() + ",\"sigma\":" + sigma + "}";
}

inline std::vector<PairScore> load_scores(const std::filesystem::path& path) {
    std::vector<PairScore> scores;
    read_jsonl(path, [&](const json& record, std::size_t line_no) {
        PairScore s;
        s.pair.test_id = record.at("test_id").get<std::string>();
        s.pair.train_id = record.at("train_id").get<std::string>();
        if (record.contains("combination")) {
            s.pair.combination_id = record.at("combination").get<std::string>();
        }
        s.sigma = record.at("sigma").get<double>();
        if (!(s.sigma >= 0.0 && s.sigma <= 1.0)) {
            throw data_error(path.string() + ":" + std::to_string(line_no) +
                             ": sigma out of [0,1]");
        }
        scores.push_back(std::move(s));
    });
    return scores;
}

}  // namespace tracer

#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracer/baselines.hpp"
#include "tracer/corpus.hpp"
#include "tracer/digest.hpp"
#include "tracer/errors.hpp"
#include "tracer/gateway.hpp"
#include "tracer/triage.hpp"

namespace tracer {

struct DatasetConfig {
    std::filesystem::path path;
    IngestSchema schema;
};

struct BackendConfig {
    std::string kind = "mock";  // "mock" or "http"
    std::string model_id = "mock";
    std::string url;
    std::string api_key;
    std::optional<double> temperature;
    int max_output = 4096;
    std::size_t mock_dim = 64;  // mock embedding dimension
};

struct MockConfig {
    std::optional<std::filesystem::path> verdict_file;  // {test_id, train_id, answer} records
    std::string default_verdict = "D";
    std::vector<std::string> trivial_markers = {"trivial"};
};

struct ThresholdConfig {
    TriageThresholds triage;        // tau_low / tau_high
    double candidate_floor = 0.5;   // benchmark-construction pool floor, distinct from tau_low
    double binary_threshold = 0.6;  // threshold-only binary ablation
    double bm25_threshold = 0.6;
    FineThresholds fine;
};

struct StageToggles {
    bool normalize = true;
    bool triage = true;
    bool verify = true;
    bool screen = true;
};

struct SampleConfig {
    std::size_t n_per_combination = 85;
    std::size_t dev_per_combination = 25;
};

struct RunConfig {
    std::filesystem::path run_dir = "run";
    std::filesystem::path cache_dir = "cache";
    std::uint64_t seed = 0;
    double price_per_million = 10.0;
    int concurrency = 4;
    double grid_step = 0.05;
    double fine_grid_step = 0.01;  // Appendix-style fine search needs a finer grid
    std::size_t tile_size = 1024;
    int embedding_batch_size = 64;
    int parse_retries = 3;
    RetryPolicy retry;

    std::vector<DatasetConfig> benchmarks;
    std::vector<DatasetConfig> post_training;
    BackendConfig chat;
    BackendConfig embedding;
    MockConfig mock;
    ThresholdConfig thresholds;
    StageToggles stages;
    SampleConfig sample;

    std::string digest;  // sha256 of the canonicalized config document
};

namespace detail {

inline DatasetConfig parse_dataset_config(const json& j) {
    DatasetConfig d;
    d.path = j.at("path").get<std::string>();
    d.schema.dataset_id = j.at("dataset_id").get<std::string>();
    d.schema.id_field = j.value("id_field", std::string("id"));
    d.schema.description_field = j.value("description_field", std::string("description"));
    if (j.contains("solution_field")) {
        d.schema.solution_field = j.at("solution_field").get<std::string>();
    }
    return d;
}

inline BackendConfig parse_backend_config(const json& j, const BackendConfig& defaults) {
    BackendConfig b = defaults;
    b.kind = j.value("kind", b.kind);
    b.model_id = j.value("model_id", b.model_id);
    b.url = j.value("url", b.url);
    b.api_key = j.value("api_key", b.api_key);
    if (j.contains("temperature") && !j.at("temperature").is_null()) {
        b.temperature = j.at("temperature").get<double>();
    }
    b.max_output = j.value("max_output", b.max_output);
    b.mock_dim = j.value("mock_dim", b.mock_dim);
    if (b.kind != "mock" && b.kind != "http") {
        throw config_error("backend kind must be 'mock' or 'http', got '" + b.kind + "'");
    }
    if (b.kind == "http" && b.url.empty()) {
        throw config_error("http backend requires a url");
    }
    return b;
}

}  // namespace detail

// Loads a run config, resolving relative paths against the config file's
// directory. The API key may come from the TRACER_API_KEY environment
// variable, which overrides any value in the file.
inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw config_error("config file is not valid JSON: " + path.string());

    RunConfig cfg;
    cfg.digest = sha256_hex(j.dump());
    auto base = path.parent_path();
    auto resolve = [&](const std::filesystem::path& p) {
        return p.is_absolute() ? p : base / p;
    };

    cfg.run_dir = resolve(j.value("run_dir", std::string("run")));
    cfg.cache_dir = resolve(j.value("cache_dir", std::string("cache")));
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.price_per_million = j.value("price_per_million", 10.0);
    cfg.concurrency = j.value("concurrency", 4);
    cfg.grid_step = j.value("grid_step", 0.05);
    cfg.fine_grid_step = j.value("fine_grid_step", 0.01);
    cfg.tile_size = j.value("tile_size", std::size_t{1024});
    cfg.embedding_batch_size = j.value("embedding_batch_size", 64);
    cfg.parse_retries = j.value("parse_retries", 3);
    if (j.contains("retry")) {
        const auto& r = j.at("retry");
        cfg.retry.attempts = r.value("attempts", cfg.retry.attempts);
        cfg.retry.base_backoff =
            std::chrono::milliseconds(r.value("base_backoff_ms", std::int64_t{1000}));
        cfg.retry.max_backoff =
            std::chrono::milliseconds(r.value("max_backoff_ms", std::int64_t{30000}));
    }

    if (j.contains("datasets")) {
        const auto& d = j.at("datasets");
        for (const auto& b : d.value("benchmarks", json::array())) {
            auto dc = detail::parse_dataset_config(b);
            dc.path = resolve(dc.path);
            cfg.benchmarks.push_back(std::move(dc));
        }
        for (const auto& t : d.value("post_training", json::array())) {
            auto dc = detail::parse_dataset_config(t);
            dc.path = resolve(dc.path);
            cfg.post_training.push_back(std::move(dc));
        }
    }

    if (j.contains("backends")) {
        const auto& b = j.at("backends");
        if (b.contains("chat")) cfg.chat = detail::parse_backend_config(b.at("chat"), cfg.chat);
        if (b.contains("embedding")) {
            cfg.embedding = detail::parse_backend_config(b.at("embedding"), cfg.embedding);
        }
    }
    if (const char* env_key = std::getenv("TRACER_API_KEY")) {
        cfg.chat.api_key = env_key;
        cfg.embedding.api_key = env_key;
    }

    if (j.contains("mock")) {
        const auto& m = j.at("mock");
        if (m.contains("verdict_file")) {
            cfg.mock.verdict_file = resolve(m.at("verdict_file").get<std::string>());
        }
        cfg.mock.default_verdict = m.value("default_verdict", std::string("D"));
        if (m.contains("trivial_markers")) {
            cfg.mock.trivial_markers = m.at("trivial_markers").get<std::vector<std::string>>();
        }
    }

    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        cfg.thresholds.triage.tau_low = t.value("tau_low", cfg.thresholds.triage.tau_low);
        cfg.thresholds.triage.tau_high = t.value("tau_high", cfg.thresholds.triage.tau_high);
        cfg.thresholds.candidate_floor =
            t.value("candidate_floor", cfg.thresholds.candidate_floor);
        cfg.thresholds.binary_threshold =
            t.value("binary_threshold", cfg.thresholds.binary_threshold);
        cfg.thresholds.bm25_threshold = t.value("bm25_threshold", cfg.thresholds.bm25_threshold);
        if (t.contains("fine")) {
            const auto& f = t.at("fine");
            cfg.thresholds.fine.t1 = f.value("t1", cfg.thresholds.fine.t1);
            cfg.thresholds.fine.t2 = f.value("t2", cfg.thresholds.fine.t2);
            cfg.thresholds.fine.t3 = f.value("t3", cfg.thresholds.fine.t3);
        }
    }
    validate(cfg.thresholds.triage);
    validate(cfg.thresholds.fine);

    if (j.contains("stages")) {
        const auto& s = j.at("stages");
        cfg.stages.normalize = s.value("normalize", true);
        cfg.stages.triage = s.value("triage", true);
        cfg.stages.verify = s.value("verify", true);
        cfg.stages.screen = s.value("screen", true);
    }

    if (j.contains("sample")) {
        const auto& s = j.at("sample");
        cfg.sample.n_per_combination =
            s.value("n_per_combination", cfg.sample.n_per_combination);
        cfg.sample.dev_per_combination =
            s.value("dev_per_combination", cfg.sample.dev_per_combination);
    }

    if (cfg.concurrency < 1) throw config_error("concurrency must be >= 1");
    if (!(cfg.grid_step > 0.0 && cfg.grid_step <= 1.0)) {
        throw config_error("grid_step must be in (0,1]");
    }
    return cfg;
}

}  // namespace tracer

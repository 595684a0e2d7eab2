#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tracer/backends.hpp"
#include "tracer/baselines.hpp"
#include "tracer/config.hpp"
#include "tracer/corpus.hpp"
#include "tracer/gateway.hpp"
#include "tracer/metrics.hpp"
#include "tracer/normalize.hpp"
#include "tracer/screen.hpp"
#include "tracer/triage.hpp"
#include "tracer/verify.hpp"

namespace tracer {

// Counts reconcile by construction and are re-checked at emit time.
struct RunReport {
    std::uint64_t total_pairs = 0;
    std::uint64_t auto_fi = 0;
    std::uint64_t auto_u = 0;
    std::uint64_t ambiguous = 0;
    std::uint64_t verified = 0;            // pairs decided by LLM verification
    std::uint64_t threshold_labeled = 0;   // pairs decided by the no-verify ablation
    std::uint64_t filtered = 0;            // trivial-filtered pairs
    std::uint64_t pre_screen_contaminated = 0;
    std::uint64_t detected_contaminated = 0;  // after screening
    std::map<std::string, std::uint64_t> label_counts;  // reported labels
    double contamination_rate = 0.0;
    double screening_removed_pct_of_detected = 0.0;
    json ledger;
    double cost = 0.0;
    bool approximated_tokens = false;
    std::string config_digest;

    void validate() const {
        if (auto_fi + auto_u + ambiguous != total_pairs) {
            throw error("run report does not reconcile: auto_fi + auto_u + ambiguous != total");
        }
        if (filtered > pre_screen_contaminated) {
            throw error("run report does not reconcile: filtered > detected contaminated");
        }
        if (detected_contaminated + filtered != pre_screen_contaminated) {
            throw error("run report does not reconcile: screening counts");
        }
        std::uint64_t labels = 0;
        for (const auto& [_, n] : label_counts) labels += n;
        if (labels != total_pairs) {
            throw error("run report does not reconcile: label counts != total pairs");
        }
    }

    json to_json() const {
        validate();
        return {{"total_pairs", total_pairs},
                {"auto_fi", auto_fi},
                {"auto_u", auto_u},
                {"ambiguous", ambiguous},
                {"verified", verified},
                {"threshold_labeled", threshold_labeled},
                {"filtered", filtered},
                {"pre_screen_contaminated", pre_screen_contaminated},
                {"detected_contaminated", detected_contaminated},
                {"label_counts", label_counts},
                {"contamination_rate", contamination_rate},
                {"screening_removed_pct_of_detected", screening_removed_pct_of_detected},
                {"ledger", ledger},
                {"cost", cost},
                {"approximated_tokens", approximated_tokens},
                {"config_digest", config_digest}};
    }
};

namespace detail {

// Mock verdict rules are configured by pair ids; the backend matches on the
// task texts it sees in the prompt, so translate via the ingested datasets.
inline MockChatRules build_mock_rules(const RunConfig& cfg,
                                      const std::vector<Dataset>& benchmarks,
                                      const std::vector<Dataset>& corpora) {
    MockChatRules rules;
    rules.trivial_markers = cfg.mock.trivial_markers;
    if (!cfg.mock.default_verdict.empty()) rules.default_verdict = cfg.mock.default_verdict[0];
    if (!cfg.mock.verdict_file) return rules;

    auto find_text = [](const std::vector<Dataset>& sets,
                        const std::string& id) -> const std::string* {
        for (const auto& ds : sets) {
            for (const auto& t : ds.tasks) {
                if (t.id == id) return &t.description;
            }
        }
        return nullptr;
    };

    read_jsonl(*cfg.mock.verdict_file, [&](const json& record, std::size_t line_no) {
        std::string test_id = record.at("test_id").get<std::string>();
        std::string train_id = record.at("train_id").get<std::string>();
        std::string answer = record.at("answer").get<std::string>();
        if (answer.size() != 1 || answer[0] < 'A' || answer[0] > 'D') {
            throw config_error(cfg.mock.verdict_file->string() + ":" + std::to_string(line_no) +
                               ": answer must be a single letter A-D");
        }
        const std::string* a = find_text(benchmarks, test_id);
        const std::string* b = find_text(corpora, train_id);
        if (a && b) rules.verdicts[{*a, *b}] = answer[0];
    });
    return rules;
}

}  // namespace detail

// Owns the gateway plus the backends for one run.
struct GatewayBundle {
    std::shared_ptr<MockChatBackend> mock_chat;
    std::shared_ptr<MockEmbeddingBackend> mock_embedding;
    std::unique_ptr<Gateway> gateway;
};

inline GatewayBundle build_gateway(const RunConfig& cfg,
                                   const std::vector<Dataset>& benchmarks = {},
                                   const std::vector<Dataset>& corpora = {}) {
    GatewayBundle bundle;
    GatewayOptions options;
    options.cache_dir = cfg.cache_dir;
    options.max_in_flight = cfg.concurrency;
    options.retry = cfg.retry;
    options.embedding_batch_size = cfg.embedding_batch_size;

    std::shared_ptr<ChatBackend> chat;
    if (cfg.chat.kind == "mock") {
        bundle.mock_chat = std::make_shared<MockChatBackend>(
            detail::build_mock_rules(cfg, benchmarks, corpora));
        chat = bundle.mock_chat;
    } else {
        chat = std::make_shared<HttpChatBackend>(HttpBackendConfig{cfg.chat.url, cfg.chat.api_key});
    }

    std::shared_ptr<EmbeddingBackend> embedding;
    if (cfg.embedding.kind == "mock") {
        bundle.mock_embedding = std::make_shared<MockEmbeddingBackend>(cfg.embedding.mock_dim);
        embedding = bundle.mock_embedding;
    } else {
        embedding = std::make_shared<HttpEmbeddingBackend>(
            HttpBackendConfig{cfg.embedding.url, cfg.embedding.api_key});
    }

    bundle.gateway = std::make_unique<Gateway>(chat, embedding, options);
    bundle.gateway->ledger().set_price_per_million(cfg.price_per_million);
    return bundle;
}

inline std::vector<Dataset> ingest_all(const std::vector<DatasetConfig>& configs,
                                       DatasetRole role) {
    std::vector<Dataset> out;
    for (const auto& c : configs) out.push_back(ingest(c.path, c.schema, role));
    return out;
}

// Executes the enabled stages in order over every benchmark x corpus
// combination. Per-pair artifacts (normalization records, verdicts, trivial
// judgments) are persisted as they are produced and reused on rerun, so a
// finished run replays with zero billable calls.
class DetectRun {
  public:
    explicit DetectRun(RunConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.benchmarks.empty() || cfg_.post_training.empty()) {
            throw config_error("detect: config must name at least one benchmark and one "
                               "post-training dataset");
        }
        std::filesystem::create_directories(cfg_.run_dir);
        benchmarks_ = ingest_all(cfg_.benchmarks, DatasetRole::benchmark);
        corpora_ = ingest_all(cfg_.post_training, DatasetRole::post_training);
        bundle_ = build_gateway(cfg_, benchmarks_, corpora_);
    }

    RunReport run() {
        if (cfg_.stages.normalize) normalize_stage();
        build_task_index();
        bool need_scores = cfg_.stages.triage || !cfg_.stages.verify;
        if (need_scores) score_stage();

        // Partition (or route everything to verification when triage is off).
        PartitionSummary parts = partition_stage();
        std::vector<Verdict> finals = decide_stage(parts);
        if (cfg_.stages.screen) finals = screen_stage(std::move(finals));

        std::sort(finals.begin(), finals.end(), [](const Verdict& a, const Verdict& b) {
            return pair_id_less(a.pair, b.pair);
        });
        jsonl_writer out(cfg_.run_dir / "final_verdicts.jsonl", /*append=*/false);
        for (const auto& v : finals) out.write(verdict_to_json(v));

        RunReport report = build_report(parts, finals);
        gateway().ledger().save(cfg_.run_dir / "ledger.json");
        std::ofstream rjson(cfg_.run_dir / "report.json", std::ios::trunc);
        rjson << report.to_json().dump(2) << '\n';
        return report;
    }

    Gateway& gateway() { return *bundle_.gateway; }
    const std::vector<Dataset>& benchmarks() const { return benchmarks_; }
    const std::vector<Dataset>& corpora() const { return corpora_; }

  private:
    struct PartitionSummary {
        std::uint64_t total = 0, auto_fi = 0, auto_u = 0;
        std::vector<Verdict> auto_verdicts;
        std::vector<PairScore> ambiguous;       // when scores exist
        std::vector<TaskPair> ambiguous_pairs;  // always filled
    };

    void normalize_stage() {
        for (auto* group : {&benchmarks_, &corpora_}) {
            for (auto& ds : *group) {
                auto store = cfg_.run_dir / ("normalized_" + ds.dataset_id + ".jsonl");
                auto existing = load_normalization_records(store);
                jsonl_writer sink(store, /*append=*/true);
                auto outcome = normalize_dataset(gateway(), ds, cfg_.chat.model_id, &existing,
                                                 &sink, cfg_.concurrency, cfg_.chat.max_output);
                if (!outcome.failures.empty()) {
                    throw backend_error("normalization failed for " +
                                        std::to_string(outcome.failures.size()) + " task(s) in '" +
                                        ds.dataset_id + "'; first: " + outcome.failures.front());
                }
                ds = std::move(outcome.dataset);
            }
        }
    }

    void score_stage() {
        for (auto* group : {&benchmarks_, &corpora_}) {
            for (auto& ds : *group) {
                std::vector<std::string> texts;
                texts.reserve(ds.size());
                for (const auto& t : ds.tasks) texts.push_back(t.working_text());
                if (texts.empty()) {
                    embeddings_[ds.dataset_id] = EmbeddingMatrix{ds.dataset_id, {}};
                    continue;
                }
                EmbeddingMatrix m;
                m.dataset_id = ds.dataset_id;
                m.rows = gateway().embed(cfg_.embedding.model_id, texts);
                embeddings_[ds.dataset_id] = std::move(m);
            }
        }

        // Partition while streaming, so only the three regions are held, not
        // a second copy of every score.
        if (cfg_.stages.triage) accumulator_.emplace(cfg_.thresholds.triage);
        jsonl_writer score_file(cfg_.run_dir / "scores.jsonl", /*append=*/false);
        for (const auto& bench : benchmarks_) {
            for (const auto& train : corpora_) {
                score_all(bench, train, embeddings_.at(bench.dataset_id),
                          embeddings_.at(train.dataset_id),
                          [&](const PairScore& s) {
                              score_file.write_raw(score_line(s));
                              if (accumulator_) {
                                  accumulator_->add(s);
                              } else {
                                  scores_.push_back(s);
                              }
                          },
                          cfg_.tile_size);
            }
        }
    }

    PartitionSummary partition_stage() {
        PartitionSummary out;
        if (cfg_.stages.triage) {
            TriagePartition part = accumulator_->take();
            out.total = part.total();
            out.auto_fi = part.auto_fi.size();
            out.auto_u = part.auto_u.size();
            for (const auto& s : part.auto_fi) out.auto_verdicts.push_back(triage_high_verdict(s.pair));
            for (const auto& s : part.auto_u) out.auto_verdicts.push_back(triage_low_verdict(s.pair));
            out.ambiguous = std::move(part.ambiguous);
            for (const auto& s : out.ambiguous) out.ambiguous_pairs.push_back(s.pair);

            json manifest = {{"tau_low", cfg_.thresholds.triage.tau_low},
                             {"tau_high", cfg_.thresholds.triage.tau_high},
                             {"total", out.total},
                             {"auto_fi", out.auto_fi},
                             {"auto_u", out.auto_u},
                             {"ambiguous", out.ambiguous.size()}};
            std::ofstream mf(cfg_.run_dir / "partition.json", std::ios::trunc);
            mf << manifest.dump(2) << '\n';
        } else if (!scores_.empty()) {
            // Triage off but sigma needed by the no-verify ablation.
            out.total = scores_.size();
            out.ambiguous = scores_;
            for (const auto& s : out.ambiguous) out.ambiguous_pairs.push_back(s.pair);
        } else {
            // Triage off: every pair goes to verification.
            for (const auto& bench : benchmarks_) {
                for (const auto& train : corpora_) {
                    for_each_pair(bench, train, [&](const TaskPair& p) {
                        out.ambiguous_pairs.push_back(p);
                        ++out.total;
                    });
                }
            }
        }
        return out;
    }

    std::vector<Verdict> decide_stage(PartitionSummary& parts) {
        std::vector<Verdict> finals = std::move(parts.auto_verdicts);
        if (cfg_.stages.verify) {
            auto store = cfg_.run_dir / "verdicts.jsonl";
            std::map<std::string, Verdict> existing;
            if (std::filesystem::exists(store)) {
                for (auto& v : load_verdicts(store)) existing[verdict_key(v.pair)] = v;
            }
            jsonl_writer sink(store, /*append=*/true);
            VerifyOptions options;
            options.model_id = cfg_.chat.model_id;
            options.max_output = cfg_.chat.max_output;
            options.parse_retries = cfg_.parse_retries;
            options.workers = cfg_.concurrency;
            auto outcome = verify_pairs(
                gateway(), parts.ambiguous_pairs,
                [&](const TaskPair& p, bool test_side) -> const std::string& {
                    return working_text(p, test_side);
                },
                options, &existing, [&](const Verdict& v) { sink.write(verdict_to_json(v)); });
            if (!outcome.failures.empty()) {
                throw backend_error("verification failed for " +
                                    std::to_string(outcome.failures.size()) +
                                    " pair(s); first: " + outcome.failures.front());
            }
            verified_ = outcome.verdicts.size();
            for (auto& v : outcome.verdicts) finals.push_back(std::move(v));
        } else {
            // No-verification ablation: label the remaining pairs from sigma.
            for (const auto& s : parts.ambiguous) {
                Verdict v;
                v.pair = s.pair;
                v.label = threshold_only_fine(s.sigma, cfg_.thresholds.fine);
                v.stage = std::string(stages::threshold_fine);
                finals.push_back(std::move(v));
                ++threshold_labeled_;
            }
        }
        return finals;
    }

    std::vector<Verdict> screen_stage(std::vector<Verdict> finals) {
        auto store = cfg_.run_dir / "judgments.jsonl";
        auto existing = load_judgments(store);
        jsonl_writer sink(store, /*append=*/true);
        ScreenOptions options;
        options.model_id = cfg_.chat.model_id;
        options.max_output = cfg_.chat.max_output;
        options.parse_retries = cfg_.parse_retries;
        TrivialScreen screen(gateway(), options, std::move(existing),
                             [&](const TrivialJudgment& j) { sink.write(judgment_to_json(j)); });
        return apply_screening(std::move(finals), [&](const TaskPair& p, bool test_side) {
            return screen.is_trivial(task_of(p, test_side));
        });
    }

    RunReport build_report(const PartitionSummary& parts, const std::vector<Verdict>& finals) {
        RunReport r;
        r.total_pairs = parts.total;
        r.auto_fi = parts.auto_fi;
        r.auto_u = parts.auto_u;
        r.ambiguous = parts.total - parts.auto_fi - parts.auto_u;
        r.verified = verified_;
        r.threshold_labeled = threshold_labeled_;
        for (auto label : all_labels) r.label_counts[std::string(to_string(label))] = 0;
        for (const auto& v : finals) {
            r.label_counts[std::string(to_string(v.reported_label()))] += 1;
            bool contaminated_before = binary_reduce(v.label);
            if (v.trivial_filtered) {
                ++r.filtered;
                ++r.pre_screen_contaminated;
            } else if (contaminated_before) {
                ++r.pre_screen_contaminated;
                ++r.detected_contaminated;
            }
        }
        r.contamination_rate = r.total_pairs == 0
                                   ? 0.0
                                   : static_cast<double>(r.detected_contaminated) / r.total_pairs;
        r.screening_removed_pct_of_detected =
            r.pre_screen_contaminated == 0
                ? 0.0
                : 100.0 * static_cast<double>(r.filtered) / r.pre_screen_contaminated;
        r.ledger = gateway().ledger().to_json();
        r.cost = ledger_cost(gateway().ledger());
        r.approximated_tokens = gateway().ledger().approximated_counts();
        r.config_digest = cfg_.digest;
        r.validate();
        return r;
    }

    // Index is built after normalization, once task storage is final. Task
    // ids are only unique within a dataset, so lookups resolve the dataset
    // from the pair's combination first.
    void build_task_index() {
        task_index_.clear();
        combinations_.clear();
        for (const auto* group : {&benchmarks_, &corpora_}) {
            for (const auto& ds : *group) {
                auto& by_id = task_index_[ds.dataset_id];
                for (const auto& t : ds.tasks) by_id.emplace(t.id, &t);
            }
        }
        for (const auto& bench : benchmarks_) {
            for (const auto& train : corpora_) {
                combinations_[make_combination_id(bench.dataset_id, train.dataset_id)] = {
                    &bench, &train};
            }
        }
    }

    const Task& task_of(const TaskPair& p, bool test_side) {
        auto combo = combinations_.find(p.combination_id);
        if (combo == combinations_.end()) {
            throw data_error("unknown combination '" + p.combination_id + "' referenced by pair");
        }
        const Dataset* ds = test_side ? combo->second.first : combo->second.second;
        const std::string& id = test_side ? p.test_id : p.train_id;
        const auto& by_id = task_index_.at(ds->dataset_id);
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw data_error("unknown task id '" + id + "' in dataset '" + ds->dataset_id + "'");
        }
        return *it->second;
    }

    const std::string& working_text(const TaskPair& p, bool test_side) {
        return task_of(p, test_side).working_text();
    }

    RunConfig cfg_;
    std::vector<Dataset> benchmarks_;
    std::vector<Dataset> corpora_;
    GatewayBundle bundle_;
    std::map<std::string, std::map<std::string, const Task*>> task_index_;
    std::map<std::string, std::pair<const Dataset*, const Dataset*>> combinations_;
    std::map<std::string, EmbeddingMatrix> embeddings_;
    std::optional<PartitionAccumulator> accumulator_;
    std::vector<PairScore> scores_;  // kept only when triage is off but sigma is needed
    std::uint64_t verified_ = 0;
    std::uint64_t threshold_labeled_ = 0;
};

}  // namespace tracer

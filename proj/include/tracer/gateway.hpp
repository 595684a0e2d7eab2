#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tracer/digest.hpp"
#include "tracer/errors.hpp"
#include "tracer/jsonl.hpp"
#include "tracer/rng.hpp"

namespace tracer {

// Transient transport/server failures are retried; everything else is not.
struct transient_backend_error : backend_error {
    using backend_error::backend_error;
};

struct ChatRequest {
    std::string model_id;
    std::string prompt;
    int max_output = 4096;
    std::optional<double> temperature;  // determinism hint, backend default when unset
    std::string stage = "chat";         // ledger bucket
};

struct ChatResponse {
    std::string text;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    bool cached = false;
    bool tokens_approximated = false;
    std::string digest;  // cache key of the request
};

struct EmbeddingVector {
    std::vector<double> values;
    std::string model_id;
};

struct StageTally {
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    std::uint64_t calls = 0;        // billable (non-cached) calls
    std::uint64_t cached_hits = 0;

    std::uint64_t total_tokens() const { return prompt_tokens + completion_tokens; }
};

// Token tallies per pipeline stage. Tallies only ever grow during a run.
class CostLedger {
  public:
    CostLedger() = default;

    CostLedger(const CostLedger& other) {
        std::lock_guard lock(other.mu_);
        stages_ = other.stages_;
        price_per_million_ = other.price_per_million_;
        approximated_counts_ = other.approximated_counts_;
    }

    CostLedger& operator=(const CostLedger& other) {
        if (this == &other) return *this;
        std::scoped_lock lock(mu_, other.mu_);
        stages_ = other.stages_;
        price_per_million_ = other.price_per_million_;
        approximated_counts_ = other.approximated_counts_;
        return *this;
    }

    void add(const std::string& stage, std::uint64_t prompt_tokens,
             std::uint64_t completion_tokens, bool approximated) {
        std::lock_guard lock(mu_);
        auto& t = stages_[stage];
        t.prompt_tokens += prompt_tokens;
        t.completion_tokens += completion_tokens;
        t.calls += 1;
        if (approximated) approximated_counts_ = true;
    }

    void add_cached_hit(const std::string& stage) {
        std::lock_guard lock(mu_);
        stages_[stage].cached_hits += 1;
    }

    void set_price_per_million(double price) {
        std::lock_guard lock(mu_);
        price_per_million_ = price;
    }

    double price_per_million() const {
        std::lock_guard lock(mu_);
        return price_per_million_;
    }

    std::uint64_t total_tokens() const {
        std::lock_guard lock(mu_);
        std::uint64_t total = 0;
        for (const auto& [_, t] : stages_) total += t.total_tokens();
        return total;
    }

    std::uint64_t total_calls() const {
        std::lock_guard lock(mu_);
        std::uint64_t total = 0;
        for (const auto& [_, t] : stages_) total += t.calls;
        return total;
    }

    bool approximated_counts() const {
        std::lock_guard lock(mu_);
        return approximated_counts_;
    }

    std::map<std::string, StageTally> stages() const {
        std::lock_guard lock(mu_);
        return stages_;
    }

    json to_json() const {
        std::lock_guard lock(mu_);
        json stages = json::object();
        for (const auto& [name, t] : stages_) {
            stages[name] = {{"prompt_tokens", t.prompt_tokens},
                            {"completion_tokens", t.completion_tokens},
                            {"calls", t.calls},
                            {"cached_hits", t.cached_hits}};
        }
        return {{"price_per_million", price_per_million_},
                {"approximated_token_counts", approximated_counts_},
                {"stages", stages}};
    }

    static CostLedger from_json(const json& j) {
        CostLedger ledger;
        ledger.price_per_million_ = j.value("price_per_million", 0.0);
        ledger.approximated_counts_ = j.value("approximated_token_counts", false);
        if (j.contains("stages")) {
            for (const auto& [name, t] : j.at("stages").items()) {
                StageTally tally;
                tally.prompt_tokens = t.value("prompt_tokens", std::uint64_t{0});
                tally.completion_tokens = t.value("completion_tokens", std::uint64_t{0});
                tally.calls = t.value("calls", std::uint64_t{0});
                tally.cached_hits = t.value("cached_hits", std::uint64_t{0});
                ledger.stages_[name] = tally;
            }
        }
        return ledger;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw data_error("cannot write ledger: " + path.string());
        out << to_json().dump(2) << '\n';
    }

    static CostLedger load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw data_error("cannot open ledger: " + path.string());
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) throw data_error("malformed ledger file: " + path.string());
        return from_json(j);
    }

  private:
    mutable std::mutex mu_;
    std::map<std::string, StageTally> stages_;
    double price_per_million_ = 0.0;
    bool approximated_counts_ = false;
};

// total tokens / 1e6 * price
inline double ledger_cost(const CostLedger& ledger) {
    return static_cast<double>(ledger.total_tokens()) / 1e6 * ledger.price_per_million();
}

// Backends produce raw response bodies in the de-facto JSON shapes; the
// gateway caches bodies verbatim and parses them uniformly, so a cache hit
// goes through the exact same decode path as a live reply.
class ChatBackend {
  public:
    virtual ~ChatBackend() = default;
    virtual std::string complete(const ChatRequest& req) = 0;
    virtual std::string name() const = 0;
};

class EmbeddingBackend {
  public:
    virtual ~EmbeddingBackend() = default;
    virtual std::string embed_batch(const std::string& model_id,
                                    const std::vector<std::string>& texts) = 0;
    virtual std::string name() const = 0;
};

namespace detail {

inline std::uint64_t approx_tokens(std::string_view text) {
    return (text.size() + 3) / 4;  // ceil(bytes/4)
}

struct ParsedChatBody {
    std::string text;
    std::optional<std::int64_t> prompt_tokens;
    std::optional<std::int64_t> completion_tokens;
};

inline ParsedChatBody parse_chat_body(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw backend_error("malformed backend reply: body is not JSON");
    ParsedChatBody parsed;
    try {
        parsed.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw backend_error("malformed backend reply: missing choices[0].message.content");
    }
    if (j.contains("usage")) {
        const auto& u = j.at("usage");
        if (u.contains("prompt_tokens")) parsed.prompt_tokens = u.at("prompt_tokens").get<std::int64_t>();
        if (u.contains("completion_tokens")) {
            parsed.completion_tokens = u.at("completion_tokens").get<std::int64_t>();
        }
    }
    return parsed;
}

struct ParsedEmbeddingBody {
    std::vector<std::vector<double>> vectors;
    std::optional<std::int64_t> prompt_tokens;
};

inline ParsedEmbeddingBody parse_embedding_body(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw backend_error("malformed backend reply: body is not JSON");
    ParsedEmbeddingBody parsed;
    try {
        for (const auto& item : j.at("data")) {
            parsed.vectors.push_back(item.at("embedding").get<std::vector<double>>());
        }
    } catch (const json::exception&) {
        throw backend_error("malformed backend reply: missing data[].embedding");
    }
    if (j.contains("usage") && j.at("usage").contains("prompt_tokens")) {
        parsed.prompt_tokens = j.at("usage").at("prompt_tokens").get<std::int64_t>();
    }
    return parsed;
}

}  // namespace detail

// One file per digest; the file holds the raw response body.
class ResponseCache {
  public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    std::optional<std::string> lookup(const std::string& digest) const {
        std::ifstream in(file_for(digest), std::ios::binary);
        if (!in) return std::nullopt;
        std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return body;
    }

    // Write-to-temp then rename, serialized, so readers never see torn bodies
    // and concurrent writers of the same digest do not interleave.
    void store(const std::string& digest, const std::string& body) {
        std::lock_guard lock(write_mu_);
        auto target = file_for(digest);
        auto tmp = target;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw data_error("cannot write cache file: " + tmp.string());
            out << body;
        }
        std::filesystem::rename(tmp, target);
    }

    const std::filesystem::path& dir() const { return dir_; }

  private:
    std::filesystem::path file_for(const std::string& digest) const {
        return dir_ / (digest + ".json");
    }

    std::filesystem::path dir_;
    mutable std::mutex write_mu_;
};

struct RetryPolicy {
    int attempts = 5;
    std::chrono::milliseconds base_backoff{1000};
    double factor = 2.0;
    std::chrono::milliseconds max_backoff{30000};
    bool jitter = true;
};

struct GatewayOptions {
    std::filesystem::path cache_dir = ".tracer-cache";
    int max_in_flight = 4;
    RetryPolicy retry;
    int embedding_batch_size = 64;
};

// Per-call record, kept in memory so a run's ledger can be replayed.
struct CallRecord {
    std::string stage;
    std::string digest;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    bool cached = false;
};

// Uniform access to chat and embedding backends: content-addressed response
// cache, bounded in-flight concurrency, capped exponential backoff on
// transient failures, and per-stage token accounting.
class Gateway {
  public:
    Gateway(std::shared_ptr<ChatBackend> chat_backend,
            std::shared_ptr<EmbeddingBackend> embedding_backend, GatewayOptions options)
        : chat_backend_(std::move(chat_backend)),
          embedding_backend_(std::move(embedding_backend)),
          options_(options),
          cache_(options.cache_dir),
          slots_(std::max(1, options.max_in_flight)) {}

    ChatResponse chat(const ChatRequest& req) {
        if (req.prompt.empty()) throw data_error("chat: empty prompt");
        if (!chat_backend_) throw config_error("chat backend not configured");
        std::string digest = chat_cache_key(req.model_id, req.prompt, req.max_output);

        bool fresh = false;
        std::string body = fetch_body(digest, fresh, [&] { return chat_backend_->complete(req); });

        auto parsed = detail::parse_chat_body(body);
        ChatResponse resp;
        resp.text = parsed.text;
        resp.digest = digest;
        resp.cached = !fresh;
        resp.tokens_approximated = !parsed.prompt_tokens || !parsed.completion_tokens;
        resp.prompt_tokens = parsed.prompt_tokens.value_or(
            static_cast<std::int64_t>(detail::approx_tokens(req.prompt)));
        resp.completion_tokens = parsed.completion_tokens.value_or(
            static_cast<std::int64_t>(detail::approx_tokens(parsed.text)));
        record(req.stage, digest, resp.prompt_tokens, resp.completion_tokens, resp.cached,
               resp.tokens_approximated);
        return resp;
    }

    // One vector per input text, order preserved. Batched transparently;
    // cached per (model_id, text).
    std::vector<EmbeddingVector> embed(const std::string& model_id,
                                       const std::vector<std::string>& texts,
                                       const std::string& stage = "embed") {
        if (texts.empty()) throw data_error("embed: empty input list");
        if (!embedding_backend_) throw config_error("embedding backend not configured");

        std::vector<EmbeddingVector> out(texts.size());
        // Distinct missing texts only: duplicates share one remote slot.
        std::vector<std::string> miss_texts;
        std::map<std::string, std::vector<std::size_t>> miss_indices;  // text -> positions
        for (std::size_t i = 0; i < texts.size(); ++i) {
            std::string digest = embedding_cache_key(model_id, texts[i]);
            if (auto body = cache_.lookup(digest)) {
                out[i] = decode_single_embedding(*body, model_id);
                ledger_.add_cached_hit(stage);
                std::lock_guard lock(log_mu_);
                call_log_.push_back({stage, digest, 0, 0, true});
            } else {
                auto [it, inserted] = miss_indices.try_emplace(texts[i]);
                if (inserted) miss_texts.push_back(texts[i]);
                it->second.push_back(i);
            }
        }

        for (std::size_t start = 0; start < miss_texts.size();
             start += static_cast<std::size_t>(options_.embedding_batch_size)) {
            std::size_t stop = std::min(miss_texts.size(),
                                        start + static_cast<std::size_t>(options_.embedding_batch_size));
            std::vector<std::string> batch(miss_texts.begin() + start, miss_texts.begin() + stop);

            std::string body = call_with_retry([&] {
                slot_guard guard(slots_);
                return embedding_backend_->embed_batch(model_id, batch);
            });
            auto parsed = detail::parse_embedding_body(body);
            if (parsed.vectors.size() != batch.size()) {
                throw backend_error("malformed backend reply: expected " +
                                    std::to_string(batch.size()) + " embeddings, got " +
                                    std::to_string(parsed.vectors.size()));
            }

            std::uint64_t batch_bytes = 0;
            for (const auto& t : batch) batch_bytes += t.size();
            bool approximated = !parsed.prompt_tokens;
            std::int64_t batch_tokens = parsed.prompt_tokens.value_or(
                static_cast<std::int64_t>((batch_bytes + 3) / 4));
            ledger_.add(stage, static_cast<std::uint64_t>(batch_tokens), 0, approximated);

            for (std::size_t k = 0; k < batch.size(); ++k) {
                const auto& vec = parsed.vectors[k];
                if (vec.empty()) throw backend_error("backend returned empty embedding");
                std::string digest = embedding_cache_key(model_id, batch[k]);
                json single = {{"data", json::array({{{"embedding", vec}}})},
                               {"model", model_id}};
                cache_.store(digest, single.dump());
                for (std::size_t idx : miss_indices.at(batch[k])) {
                    out[idx].values = vec;
                    out[idx].model_id = model_id;
                }
            }
            // One billable record per remote batch.
            std::lock_guard lock(log_mu_);
            call_log_.push_back({stage, embedding_cache_key(model_id, batch.front()),
                                 batch_tokens, 0, false});
        }

        std::size_t dim = out.front().values.size();
        for (const auto& v : out) {
            if (v.values.size() != dim) {
                throw backend_error("inconsistent embedding dimensions from backend");
            }
            for (double x : v.values) {
                if (!std::isfinite(x)) throw backend_error("non-finite embedding value");
            }
        }
        return out;
    }

    CostLedger& ledger() { return ledger_; }
    const CostLedger& ledger() const { return ledger_; }
    ResponseCache& cache() { return cache_; }

    std::vector<CallRecord> call_log() const {
        std::lock_guard lock(log_mu_);
        return call_log_;
    }

    static std::string chat_cache_key(const std::string& model_id, const std::string& prompt,
                                      int max_output) {
        return sha256_hex_fields({"chat", model_id, prompt, std::to_string(max_output)});
    }

    static std::string embedding_cache_key(const std::string& model_id, const std::string& text) {
        return sha256_hex_fields({"embedding", model_id, text});
    }

  private:
    struct slot_guard {
        explicit slot_guard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
        ~slot_guard() { sem.release(); }
        std::counting_semaphore<>& sem;
    };

    EmbeddingVector decode_single_embedding(const std::string& body, const std::string& model_id) {
        auto parsed = detail::parse_embedding_body(body);
        if (parsed.vectors.size() != 1 || parsed.vectors[0].empty()) {
            throw backend_error("malformed cached embedding body");
        }
        return EmbeddingVector{parsed.vectors[0], model_id};
    }

    // Cache lookup, then in-flight dedup: concurrent identical requests share
    // a single remote call; only the issuing caller reports fresh=true.
    std::string fetch_body(const std::string& digest, bool& fresh,
                           const std::function<std::string()>& issue) {
        fresh = false;
        if (auto body = cache_.lookup(digest)) return *body;

        std::shared_ptr<std::promise<std::string>> promise;
        std::shared_future<std::string> future;
        {
            std::lock_guard lock(inflight_mu_);
            auto it = inflight_.find(digest);
            if (it != inflight_.end()) {
                future = it->second;
            } else {
                // Re-check under the lock: a racing leader may have finished
                // and erased its entry after our first lookup.
                if (auto body = cache_.lookup(digest)) return *body;
                promise = std::make_shared<std::promise<std::string>>();
                future = promise->get_future().share();
                inflight_.emplace(digest, future);
            }
        }

        if (!promise) return future.get();

        try {
            std::string body = call_with_retry([&] {
                slot_guard guard(slots_);
                return issue();
            });
            cache_.store(digest, body);
            promise->set_value(body);
            {
                std::lock_guard lock(inflight_mu_);
                inflight_.erase(digest);
            }
            fresh = true;
            return body;
        } catch (...) {
            promise->set_exception(std::current_exception());
            std::lock_guard lock(inflight_mu_);
            inflight_.erase(digest);
            throw;
        }
    }

    std::string call_with_retry(const std::function<std::string()>& attempt) {
        const auto& policy = options_.retry;
        std::string last_error;
        for (int k = 0; k < policy.attempts; ++k) {
            try {
                return attempt();
            } catch (const transient_backend_error& e) {
                last_error = e.what();
                if (k + 1 == policy.attempts) break;
                std::this_thread::sleep_for(backoff_delay(k));
            }
        }
        throw backend_error("exhausted retries (" + std::to_string(policy.attempts) +
                            " attempts): " + last_error);
    }

    std::chrono::milliseconds backoff_delay(int attempt) const {
        const auto& policy = options_.retry;
        double ms = static_cast<double>(policy.base_backoff.count()) *
                    std::pow(policy.factor, attempt);
        ms = std::min(ms, static_cast<double>(policy.max_backoff.count()));
        if (policy.jitter) {
            thread_local std::mt19937_64 rng(std::random_device{}());
            ms *= 0.5 + unit_double(rng());
        }
        return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
    }

    void record(const std::string& stage, const std::string& digest, std::int64_t prompt_tokens,
                std::int64_t completion_tokens, bool cached, bool approximated) {
        if (cached) {
            ledger_.add_cached_hit(stage);
        } else {
            ledger_.add(stage, static_cast<std::uint64_t>(prompt_tokens),
                        static_cast<std::uint64_t>(completion_tokens), approximated);
        }
        std::lock_guard lock(log_mu_);
        call_log_.push_back({stage, digest, prompt_tokens, completion_tokens, cached});
    }

    std::shared_ptr<ChatBackend> chat_backend_;
    std::shared_ptr<EmbeddingBackend> embedding_backend_;
    GatewayOptions options_;
    ResponseCache cache_;
    std::counting_semaphore<> slots_;
    CostLedger ledger_;

    std::mutex inflight_mu_;
    std::unordered_map<std::string, std::shared_future<std::string>> inflight_;

    mutable std::mutex log_mu_;
    std::vector<CallRecord> call_log_;
};

}  // namespace tracer

#pragma once

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "tracer/gateway.hpp"
#include "tracer/rng.hpp"
#include "tracer/text.hpp"

namespace tracer {

// Deterministic embedding: each token hashes to a splitmix64 stream that
// emits `dim` values in [-1,1); token streams are summed and the result
// unit-normalized. A pure function of the text bytes, so pipeline outputs
// are reproducible without any remote model.
inline std::vector<double> hash_projection_embedding(std::string_view text, std::size_t dim) {
    std::vector<std::string> tokens = tokenize(text);
    if (tokens.empty()) tokens.emplace_back(text);

    std::vector<double> acc(dim, 0.0);
    for (const auto& token : tokens) {
        std::uint64_t state = fnv1a64(token);
        for (std::size_t j = 0; j < dim; ++j) {
            acc[j] += unit_double(splitmix64(state)) * 2.0 - 1.0;
        }
    }
    double norm = 0.0;
    for (double x : acc) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
        acc.assign(dim, 0.0);
        acc[0] = 1.0;
        return acc;
    }
    for (double& x : acc) x /= norm;
    return acc;
}

class MockEmbeddingBackend : public EmbeddingBackend {
  public:
    explicit MockEmbeddingBackend(std::size_t dim = 64) : dim_(dim) {}

    std::string embed_batch(const std::string& model_id,
                            const std::vector<std::string>& texts) override {
        calls_.fetch_add(1);
        json data = json::array();
        for (const auto& text : texts) {
            data.push_back({{"embedding", hash_projection_embedding(text, dim_)}});
        }
        return json{{"data", data}, {"model", model_id}}.dump();
    }

    std::string name() const override { return "mock-embedding"; }
    std::uint64_t remote_calls() const { return calls_.load(); }
    std::size_t dim() const { return dim_; }

  private:
    std::size_t dim_;
    std::atomic<std::uint64_t> calls_{0};
};

// Rule table for the mock chat backend. Verification verdicts are keyed by
// the (Task A, Task B) texts extracted from the rendered prompt; screening
// is a keyword rule over the task text; normalization is an identity
// rewrite. Marker strings inject failures for tests.
struct MockChatRules {
    std::map<std::pair<std::string, std::string>, char> verdicts;
    char default_verdict = 'D';
    std::vector<std::string> trivial_markers = {"trivial"};
    std::optional<std::string> empty_reply_marker;
    std::optional<std::string> garbage_reply_marker;
    std::optional<std::string> transient_failure_marker;
};

class MockChatBackend : public ChatBackend {
  public:
    explicit MockChatBackend(MockChatRules rules = {}) : rules_(std::move(rules)) {}

    std::string complete(const ChatRequest& req) override {
        calls_.fetch_add(1);
        const std::string& p = req.prompt;
        std::string content;
        if (p.find("Then rephrase the original task description") != std::string::npos) {
            content = reply_for(extract_normalization_payload(p),
                                [&](const std::string& body) { return body; });
        } else if (p.find("Choose the single most accurate relationship") != std::string::npos) {
            auto [a, b] = extract_verification_payload(p);
            content = reply_for(a + "\n" + b, [&](const std::string&) {
                auto it = rules_.verdicts.find({a, b});
                char letter = it != rules_.verdicts.end() ? it->second : rules_.default_verdict;
                return std::string("Answer: ") + letter;
            });
        } else if (p.find("describes a basic helper function") != std::string::npos) {
            std::string task = extract_screening_payload(p);
            content = reply_for(task, [&](const std::string& body) {
                for (const auto& marker : rules_.trivial_markers) {
                    if (body.find(marker) != std::string::npos) {
                        return std::string(
                            "Decision: Yes\n"
                            "Reasoning: The task maps directly to a single built-in call, is a "
                            "common utility step inside larger problems, and involves no extra "
                            "selection or multi-step logic.");
                    }
                }
                return std::string(
                    "Decision: No\n"
                    "Reasoning: The task requires multi-step logic beyond a single built-in "
                    "call, so the atomic simplicity test fails.");
            });
        } else {
            content = p;  // echo
        }
        return json{{"choices", json::array({{{"message", {{"role", "assistant"},
                                                           {"content", content}}}}})},
                    {"model", req.model_id}}
            .dump();
    }

    std::string name() const override { return "mock-chat"; }
    std::uint64_t remote_calls() const { return calls_.load(); }

  private:
    template <typename Fn>
    std::string reply_for(const std::string& payload, Fn&& normal_reply) {
        if (rules_.transient_failure_marker &&
            payload.find(*rules_.transient_failure_marker) != std::string::npos) {
            throw transient_backend_error("mock: injected transient failure");
        }
        if (rules_.empty_reply_marker &&
            payload.find(*rules_.empty_reply_marker) != std::string::npos) {
            return "";
        }
        if (rules_.garbage_reply_marker &&
            payload.find(*rules_.garbage_reply_marker) != std::string::npos) {
            return "the tasks look vaguely similar to me";
        }
        return normal_reply(payload);
    }

    static std::string extract_normalization_payload(const std::string& prompt) {
        const std::string tail = "\nRephrased Task Description\n[New description here]";
        const std::string head = "\nTask\nOriginal Task Description\n";
        auto tail_pos = prompt.rfind(tail);
        if (tail_pos == std::string::npos) return prompt;
        auto head_pos = prompt.rfind(head, tail_pos);
        if (head_pos == std::string::npos) return prompt;
        auto begin = head_pos + head.size();
        return prompt.substr(begin, tail_pos - begin);
    }

    static std::pair<std::string, std::string> extract_verification_payload(
        const std::string& prompt) {
        const std::string head = "\nInput Tasks\nTask A. ";
        const std::string mid = "\nTask B. ";
        const std::string tail = "\n\nOutput Requirements";
        auto head_pos = prompt.find(head);
        if (head_pos == std::string::npos) return {prompt, ""};
        auto a_begin = head_pos + head.size();
        auto mid_pos = prompt.find(mid, a_begin);
        auto tail_pos = prompt.rfind(tail);
        if (mid_pos == std::string::npos || tail_pos == std::string::npos) return {prompt, ""};
        return {prompt.substr(a_begin, mid_pos - a_begin),
                prompt.substr(mid_pos + mid.size(), tail_pos - mid_pos - mid.size())};
    }

    static std::string extract_screening_payload(const std::string& prompt) {
        const std::string head = "\n\nTask\n";
        auto pos = prompt.rfind(head);
        if (pos == std::string::npos) return prompt;
        return prompt.substr(pos + head.size());
    }

    MockChatRules rules_;
    std::atomic<std::uint64_t> calls_{0};
};

namespace detail {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

inline ParsedUrl parse_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw config_error("endpoint URL must include a scheme: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string http_post_json(const std::string& url, const std::string& api_key,
                                  const json& payload,
                                  std::chrono::seconds read_timeout) {
    auto parsed = parse_url(url);
    httplib::Client client(parsed.origin);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(read_timeout.count(), 0);
    client.set_write_timeout(30, 0);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

    auto res = client.Post(parsed.path, headers, payload.dump(), "application/json");
    if (!res) {
        throw transient_backend_error("transport failure contacting " + parsed.origin + ": " +
                                      httplib::to_string(res.error()));
    }
    if (res->status == 401 || res->status == 403) {
        throw backend_error("authentication failure (" + std::to_string(res->status) + ") from " +
                            parsed.origin);
    }
    if (res->status == 408 || res->status == 429 || res->status >= 500) {
        throw transient_backend_error("status " + std::to_string(res->status) + " from " +
                                      parsed.origin);
    }
    if (res->status != 200) {
        throw backend_error("status " + std::to_string(res->status) + " from " + parsed.origin +
                            ": " + res->body);
    }
    return res->body;
}

}  // namespace detail

struct HttpBackendConfig {
    std::string url;      // full endpoint URL including path
    std::string api_key;  // empty = no Authorization header
    std::chrono::seconds read_timeout{120};
};

class HttpChatBackend : public ChatBackend {
  public:
    explicit HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {}

    std::string complete(const ChatRequest& req) override {
        json payload = {{"model", req.model_id},
                        {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
                        {"max_tokens", req.max_output}};
        if (req.temperature) payload["temperature"] = *req.temperature;
        return detail::http_post_json(config_.url, config_.api_key, payload,
                                      config_.read_timeout);
    }

    std::string name() const override { return "http-chat"; }

  private:
    HttpBackendConfig config_;
};

class HttpEmbeddingBackend : public EmbeddingBackend {
  public:
    explicit HttpEmbeddingBackend(HttpBackendConfig config) : config_(std::move(config)) {}

    std::string embed_batch(const std::string& model_id,
                            const std::vector<std::string>& texts) override {
        json payload = {{"model", model_id}, {"input", texts}};
        return detail::http_post_json(config_.url, config_.api_key, payload,
                                      config_.read_timeout);
    }

    std::string name() const override { return "http-embedding"; }

  private:
    HttpBackendConfig config_;
};

}  // namespace tracer

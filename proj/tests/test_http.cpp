#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "support/temp_dir.hpp"
#include "tracer/backends.hpp"
#include "tracer/gateway.hpp"

using namespace tracer;
using tracer_test::TempDir;

namespace {

// Minimal chat-completion/embedding server for exercising the HTTP backends.
class FakeServer {
  public:
    FakeServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            hits_.fetch_add(1);
            if (!auth_ok(req)) {
                res.status = 401;
                return;
            }
            if (fail_first_ > 0) {
                --fail_first_;
                res.status = 500;
                return;
            }
            auto body = json::parse(req.body);
            std::string prompt = body.at("messages").at(0).at("content").get<std::string>();
            json reply = {{"choices",
                           json::array({{{"message",
                                          {{"role", "assistant"},
                                           {"content", "reply to " +
                                                           std::to_string(prompt.size()) +
                                                           " bytes"}}}}})},
                          {"usage", {{"prompt_tokens", 21}, {"completion_tokens", 8}}}};
            res.set_content(reply.dump(), "application/json");
        });
        server_.Post("/v1/embeddings", [this](const httplib::Request& req,
                                              httplib::Response& res) {
            hits_.fetch_add(1);
            if (malformed_embeddings_) {
                res.set_content("<html>oops</html>", "text/html");
                return;
            }
            auto body = json::parse(req.body);
            json data = json::array();
            for (const auto& text : body.at("input")) {
                double x = static_cast<double>(text.get<std::string>().size());
                data.push_back({{"embedding", {x, 1.0, 0.5}}});
            }
            res.set_content(json{{"data", data}, {"usage", {{"prompt_tokens", 12}}}}.dump(),
                            "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~FakeServer() {
        server_.stop();
        thread_.join();
    }

    std::string url(const std::string& path) const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }

    int hits() const { return hits_.load(); }
    void fail_next(int n) { fail_first_ = n; }
    void set_malformed_embeddings(bool v) { malformed_embeddings_ = v; }

  private:
    static bool auth_ok(const httplib::Request& req) {
        auto it = req.headers.find("Authorization");
        return it != req.headers.end() && it->second == "Bearer test-key";
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> hits_{0};
    std::atomic<int> fail_first_{0};
    std::atomic<bool> malformed_embeddings_{false};
};

GatewayOptions fast_options(const TempDir& tmp) {
    GatewayOptions opts;
    opts.cache_dir = tmp.file("cache");
    opts.retry.base_backoff = std::chrono::milliseconds(1);
    opts.retry.max_backoff = std::chrono::milliseconds(4);
    return opts;
}

}  // namespace

TEST_CASE("http chat backend round-trips with exact token metadata") {
    TempDir tmp;
    FakeServer server;
    auto backend = std::make_shared<HttpChatBackend>(
        HttpBackendConfig{server.url("/v1/chat/completions"), "test-key"});
    Gateway gw(backend, nullptr, fast_options(tmp));

    ChatRequest req{"gpt-test", "hello over http"};
    auto resp = gw.chat(req);
    CHECK(resp.text == "reply to 15 bytes");
    CHECK(resp.prompt_tokens == 21);
    CHECK(resp.completion_tokens == 8);
    CHECK_FALSE(resp.tokens_approximated);
    CHECK_FALSE(gw.ledger().approximated_counts());

    // cache: the server is not contacted again
    int hits = server.hits();
    auto again = gw.chat(req);
    CHECK(again.cached);
    CHECK(server.hits() == hits);
}

TEST_CASE("authentication failure is not retried") {
    TempDir tmp;
    FakeServer server;
    auto backend = std::make_shared<HttpChatBackend>(
        HttpBackendConfig{server.url("/v1/chat/completions"), "wrong-key"});
    Gateway gw(backend, nullptr, fast_options(tmp));

    CHECK_THROWS_MATCHES(gw.chat({"m", "p"}), backend_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("authentication failure")));
    CHECK(server.hits() == 1);
}

TEST_CASE("server errors are retried with backoff until they clear") {
    TempDir tmp;
    FakeServer server;
    server.fail_next(2);
    auto backend = std::make_shared<HttpChatBackend>(
        HttpBackendConfig{server.url("/v1/chat/completions"), "test-key"});
    Gateway gw(backend, nullptr, fast_options(tmp));

    auto resp = gw.chat({"m", "retry me"});
    CHECK(resp.text == "reply to 8 bytes");
    CHECK(server.hits() == 3);
}

TEST_CASE("http embedding backend parses the de-facto shape") {
    TempDir tmp;
    FakeServer server;
    auto backend = std::make_shared<HttpEmbeddingBackend>(
        HttpBackendConfig{server.url("/v1/embeddings"), "test-key"});
    Gateway gw(nullptr, backend, fast_options(tmp));

    auto vecs = gw.embed("emb-test", {"abc", "defgh"});
    REQUIRE(vecs.size() == 2);
    CHECK(vecs[0].values == std::vector<double>{3.0, 1.0, 0.5});
    CHECK(vecs[1].values == std::vector<double>{5.0, 1.0, 0.5});
    CHECK(gw.ledger().stages().at("embed").prompt_tokens == 12);
    CHECK_FALSE(gw.ledger().approximated_counts());
}

TEST_CASE("malformed embedding body surfaces as a backend error") {
    TempDir tmp;
    FakeServer server;
    server.set_malformed_embeddings(true);
    auto backend = std::make_shared<HttpEmbeddingBackend>(
        HttpBackendConfig{server.url("/v1/embeddings"), "test-key"});
    Gateway gw(nullptr, backend, fast_options(tmp));

    CHECK_THROWS_MATCHES(gw.embed("emb", {"x"}), backend_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("malformed backend reply")));
}

TEST_CASE("transport failure to a dead endpoint exhausts retries") {
    TempDir tmp;
    auto backend = std::make_shared<HttpChatBackend>(
        HttpBackendConfig{"http://127.0.0.1:9/v1/chat/completions", "k", std::chrono::seconds(1)});
    GatewayOptions opts = fast_options(tmp);
    opts.retry.attempts = 2;
    Gateway gw(backend, nullptr, opts);
    CHECK_THROWS_MATCHES(gw.chat({"m", "p"}), backend_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("exhausted retries")));
}

TEST_CASE("endpoint URLs must carry a scheme") {
    CHECK_THROWS_AS(detail::parse_url("api.example.com/v1"), config_error);
    auto parsed = detail::parse_url("https://api.example.com/v1/chat/completions");
    CHECK(parsed.origin == "https://api.example.com");
    CHECK(parsed.path == "/v1/chat/completions");
    CHECK(detail::parse_url("http://host:8080").path == "/");
}

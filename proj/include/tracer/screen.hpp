#pragma once

#include <cctype>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tracer/corpus.hpp"
#include "tracer/digest.hpp"
#include "tracer/gateway.hpp"
#include "tracer/prompts.hpp"
#include "tracer/verify.hpp"

namespace tracer {

struct TrivialJudgment {
    std::string dataset_id;
    std::string task_id;
    bool trivial = false;
    std::string reasoning;
};

// Last line starting with "Decision:" (case-insensitive), value must be
// exactly yes or no after trimming.
inline bool parse_decision(std::string_view text) {
    auto parse_line = [](std::string_view line) -> std::optional<bool> {
        std::size_t i = line.find_first_not_of(" \t\r");
        if (i == std::string_view::npos) return std::nullopt;
        const std::string_view key = "decision:";
        if (line.size() - i < key.size()) return std::nullopt;
        for (std::size_t k = 0; k < key.size(); ++k) {
            if (std::tolower(static_cast<unsigned char>(line[i + k])) != key[k]) return std::nullopt;
        }
        std::string value = trim_copy(line.substr(i + key.size()));
        for (auto& c : value) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (value == "yes") return true;
        if (value == "no") return false;
        return std::nullopt;
    };

    std::size_t end = text.size();
    while (end > 0) {
        std::size_t begin = text.rfind('\n', end - 1);
        std::size_t line_start = begin == std::string_view::npos ? 0 : begin + 1;
        if (auto decision = parse_line(text.substr(line_start, end - line_start))) return *decision;
        if (begin == std::string_view::npos) break;
        end = begin;
    }
    throw reply_parse_error("no 'Decision: Yes|No' line found in model reply");
}

inline constexpr std::string_view screening_reask_suffix =
    "\n\nFormat your answer exactly as follows:\n\nDecision: Yes | No";

struct ScreenOptions {
    std::string model_id;
    int max_output = 1024;
    int parse_retries = 3;
};

// Per-task triviality oracle backed by the gateway. A task shared by many
// pairs is judged exactly once; concurrent requests for the same task are
// deduplicated on the in-memory cache.
class TrivialScreen {
  public:
    TrivialScreen(Gateway& gateway, ScreenOptions options,
                  std::map<std::pair<std::string, std::string>, bool> existing = {},
                  std::function<void(const TrivialJudgment&)> sink = nullptr)
        : gateway_(gateway), options_(std::move(options)), cache_(std::move(existing)),
          sink_(std::move(sink)) {}

    bool is_trivial(const Task& task) {
        std::pair<std::string, std::string> key{task.dataset_id, task.id};
        {
            std::lock_guard lock(mu_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        TrivialJudgment judgment = judge(task);
        std::lock_guard lock(mu_);
        auto [it, inserted] = cache_.emplace(key, judgment.trivial);
        if (inserted && sink_) sink_(judgment);
        return it->second;
    }

  private:
    TrivialJudgment judge(const Task& task) {
        std::string prompt = render_screening_prompt(task.working_text());
        std::string last_error;
        for (int attempt = 0; attempt < std::max(1, options_.parse_retries); ++attempt) {
            ChatRequest req;
            req.model_id = options_.model_id;
            req.prompt = prompt;
            req.max_output = options_.max_output;
            req.stage = "screen";
            ChatResponse resp = gateway_.chat(req);
            try {
                bool trivial = parse_decision(resp.text);
                return {task.dataset_id, task.id, trivial, resp.text};
            } catch (const reply_parse_error& e) {
                last_error = e.what();
                prompt += screening_reask_suffix;
            }
        }
        throw reply_parse_error("screening failed for task '" + task.id + "' in dataset '" +
                                task.dataset_id + "' after " +
                                std::to_string(options_.parse_retries) +
                                " attempts: " + last_error);
    }

    Gateway& gateway_;
    ScreenOptions options_;
    std::mutex mu_;
    std::map<std::pair<std::string, std::string>, bool> cache_;
    std::function<void(const TrivialJudgment&)> sink_;
};

// Applies trivial-task screening to final verdicts. Only contaminated labels
// (FI/NI/SL, including triage-assigned FI) are screened; if either task of
// the pair is trivial the verdict keeps its label but is reported as U with
// trivial_filtered set. U verdicts are never touched and never queried.
//
// trivial(pair, test_side) judges the benchmark task when test_side is true,
// the training task otherwise.
template <typename TrivialFn>
std::vector<Verdict> apply_screening(std::vector<Verdict> verdicts, TrivialFn&& trivial) {
    for (auto& v : verdicts) {
        if (v.label == ContaminationLabel::U || v.trivial_filtered) continue;
        if (trivial(v.pair, true) || trivial(v.pair, false)) {
            v.trivial_filtered = true;
        }
    }
    return verdicts;
}

inline json judgment_to_json(const TrivialJudgment& j) {
    return {{"dataset_id", j.dataset_id},
            {"task_id", j.task_id},
            {"trivial", j.trivial},
            {"reasoning_digest", sha256_hex(j.reasoning)}};
}

inline std::map<std::pair<std::string, std::string>, bool> load_judgments(
    const std::filesystem::path& path) {
    std::map<std::pair<std::string, std::string>, bool> out;
    if (!std::filesystem::exists(path)) return out;
    read_jsonl(path, [&](const json& record, std::size_t) {
        out[{record.at("dataset_id").get<std::string>(),
             record.at("task_id").get<std::string>()}] = record.at("trivial").get<bool>();
    });
    return out;
}

}  // namespace tracer

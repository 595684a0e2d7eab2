#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tracer/corpus.hpp"
#include "tracer/gateway.hpp"
#include "tracer/labels.hpp"
#include "tracer/prompts.hpp"
#include "tracer/triage.hpp"

namespace tracer {

// Provenance of the deciding stage. Stored as strings because baseline
// predictions reuse the verdict file format with their own stage names.
namespace stages {
inline constexpr std::string_view triage_high = "triage_high";
inline constexpr std::string_view triage_low = "triage_low";
inline constexpr std::string_view llm_verify = "llm_verify";
inline constexpr std::string_view threshold_fine = "threshold_fine";
}  // namespace stages

struct Verdict {
    TaskPair pair;
    ContaminationLabel label = ContaminationLabel::U;
    std::string stage;
    bool trivial_filtered = false;
    std::optional<char> raw_answer;  // letter A-D when stage == llm_verify
    std::string response_digest;

    // Screening reports filtered pairs as U while keeping the pre-screening
    // label in `label`.
    ContaminationLabel reported_label() const {
        return trivial_filtered ? ContaminationLabel::U : label;
    }
};

inline Verdict triage_high_verdict(const TaskPair& pair) {
    return Verdict{pair, ContaminationLabel::FI, std::string(stages::triage_high)};
}

inline Verdict triage_low_verdict(const TaskPair& pair) {
    return Verdict{pair, ContaminationLabel::U, std::string(stages::triage_low)};
}

// Scans from the last line upward for `Answer:` followed by one letter A-D;
// brackets and surrounding whitespace are tolerated, nothing else.
inline char parse_verdict(std::string_view text) {
    auto parse_line = [](std::string_view line) -> std::optional<char> {
        std::size_t i = line.find_first_not_of(" \t\r");
        if (i == std::string_view::npos) return std::nullopt;
        const std::string_view key = "Answer:";
        if (line.substr(i, key.size()) != key) return std::nullopt;
        i += key.size();
        char letter = 0;
        bool bracket = false;
        for (; i < line.size(); ++i) {
            char c = line[i];
            if (c == ' ' || c == '\t' || c == '\r') {
                continue;
            } else if ((c == '[' || c == '(') && letter == 0 && !bracket) {
                bracket = true;
            } else if ((c == ']' || c == ')') && letter != 0 && bracket) {
                bracket = false;
            } else if (c >= 'A' && c <= 'D' && letter == 0) {
                letter = c;
            } else {
                return std::nullopt;  // anything else invalidates the line
            }
        }
        if (letter == 0 || bracket) return std::nullopt;
        return letter;
    };

    std::size_t end = text.size();
    while (end > 0) {
        std::size_t begin = text.rfind('\n', end - 1);
        std::size_t line_start = begin == std::string_view::npos ? 0 : begin + 1;
        if (auto letter = parse_line(text.substr(line_start, end - line_start))) return *letter;
        if (begin == std::string_view::npos) break;
        end = begin;
    }
    throw reply_parse_error("no 'Answer: <A-D>' line found in model reply");
}

// A -> FI, B -> NI, C -> SL, D -> U
inline ContaminationLabel letter_to_label(char letter) {
    switch (letter) {
        case 'A': return ContaminationLabel::FI;
        case 'B': return ContaminationLabel::NI;
        case 'C': return ContaminationLabel::SL;
        case 'D': return ContaminationLabel::U;
        default: throw data_error(std::string("letter_to_label: invalid letter '") + letter + "'");
    }
}

inline char label_to_letter(ContaminationLabel label) {
    switch (label) {
        case ContaminationLabel::FI: return 'A';
        case ContaminationLabel::NI: return 'B';
        case ContaminationLabel::SL: return 'C';
        case ContaminationLabel::U: return 'D';
    }
    throw data_error("label_to_letter: invalid label");
}

struct VerifyOptions {
    std::string model_id;
    int max_output = 4096;
    int parse_retries = 3;  // attempts per pair before surfacing the failure
    int workers = 1;
};

inline constexpr std::string_view verification_reask_suffix =
    "\n\nFormat your answer exactly as follows:\nAnswer: [A, B, C, or D]";

// Forced-choice verification of one pair; benchmark text is Task A. On a
// parse failure the request is re-asked with the output contract restated,
// which also gives the retry a distinct cache key.
inline Verdict verify_pair(Gateway& gateway, const TaskPair& pair,
                           const std::string& benchmark_text, const std::string& training_text,
                           const VerifyOptions& options) {
    std::string prompt = render_verification_prompt(benchmark_text, training_text);
    std::string last_error;
    for (int attempt = 0; attempt < std::max(1, options.parse_retries); ++attempt) {
        ChatRequest req;
        req.model_id = options.model_id;
        req.prompt = prompt;
        req.max_output = options.max_output;
        req.stage = "verify";
        ChatResponse resp = gateway.chat(req);
        try {
            char letter = parse_verdict(resp.text);
            Verdict v;
            v.pair = pair;
            v.label = letter_to_label(letter);
            v.stage = std::string(stages::llm_verify);
            v.raw_answer = letter;
            v.response_digest = resp.digest;
            return v;
        } catch (const reply_parse_error& e) {
            last_error = e.what();
            prompt += verification_reask_suffix;
        }
    }
    throw reply_parse_error("verification failed for pair (" + pair.test_id + ", " +
                            pair.train_id + ") after " + std::to_string(options.parse_retries) +
                            " attempts: " + last_error);
}

struct VerifyOutcome {
    std::vector<Verdict> verdicts;
    std::vector<std::string> failures;
};

// Resume key: combination-qualified, since task ids are only unique within
// one dataset.
inline std::string verdict_key(const TaskPair& p) {
    return p.combination_id + "\x1f" + p.test_id + "\x1f" + p.train_id;
}

// Verifies every ambiguous pair. Already-persisted verdicts are skipped, new
// ones are appended to the sink as they are produced, so an interrupted run
// resumes from its file. Failures are collected per pair.
inline VerifyOutcome verify_pairs(
    Gateway& gateway, const std::vector<TaskPair>& ambiguous,
    const std::function<const std::string&(const TaskPair&, bool test_side)>& text_of,
    const VerifyOptions& options,
    const std::map<std::string, Verdict>* existing = nullptr,
    const std::function<void(const Verdict&)>& sink = nullptr) {
    VerifyOutcome out;
    std::mutex mu;
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= ambiguous.size()) return;
            const TaskPair& pair = ambiguous[i];
            if (existing) {
                auto it = existing->find(verdict_key(pair));
                if (it != existing->end()) {
                    std::lock_guard lock(mu);
                    out.verdicts.push_back(it->second);
                    continue;
                }
            }
            try {
                Verdict v = verify_pair(gateway, pair, text_of(pair, true), text_of(pair, false),
                                        options);
                std::lock_guard lock(mu);
                if (sink) sink(v);
                out.verdicts.push_back(std::move(v));
            } catch (const error& e) {
                std::lock_guard lock(mu);
                out.failures.emplace_back(e.what());
            }
        }
    };

    if (options.workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < options.workers; ++w) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return out;
}

inline json verdict_to_json(const Verdict& v) {
    json j{{"test_id", v.pair.test_id},
           {"train_id", v.pair.train_id},
           {"combination", v.pair.combination_id},
           {"label", std::string(to_string(v.reported_label()))},
           {"stage", v.stage},
           {"trivial_filtered", v.trivial_filtered}};
    if (v.trivial_filtered) j["pre_screening_label"] = std::string(to_string(v.label));
    if (v.raw_answer) j["raw_answer"] = std::string(1, *v.raw_answer);
    if (!v.response_digest.empty()) j["response_digest"] = v.response_digest;
    return j;
}

inline Verdict verdict_from_json(const json& j) {
    Verdict v;
    v.pair.test_id = j.at("test_id").get<std::string>();
    v.pair.train_id = j.at("train_id").get<std::string>();
    if (j.contains("combination")) v.pair.combination_id = j.at("combination").get<std::string>();
    v.stage = j.value("stage", std::string(stages::llm_verify));
    v.trivial_filtered = j.value("trivial_filtered", false);
    if (v.trivial_filtered && j.contains("pre_screening_label")) {
        v.label = label_from_string(j.at("pre_screening_label").get<std::string>());
    } else {
        v.label = label_from_string(j.at("label").get<std::string>());
    }
    if (j.contains("raw_answer")) {
        std::string raw = j.at("raw_answer").get<std::string>();
        if (raw.size() == 1) v.raw_answer = raw[0];
    }
    if (j.contains("response_digest")) v.response_digest = j.at("response_digest").get<std::string>();
    return v;
}

inline std::vector<Verdict> load_verdicts(const std::filesystem::path& path) {
    std::vector<Verdict> verdicts;
    read_jsonl(path, [&](const json& record, std::size_t) {
        verdicts.push_back(verdict_from_json(record));
    });
    return verdicts;
}

}  // namespace tracer

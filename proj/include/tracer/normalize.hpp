#pragma once

#include <cctype>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tracer/corpus.hpp"
#include "tracer/gateway.hpp"
#include "tracer/prompts.hpp"

namespace tracer {

struct NormalizationRecord {
    std::string dataset_id;
    std::string task_id;
    std::string model_id;
    std::string original;
    std::string normalized;
};

namespace detail {

inline bool iequals_prefix(std::string_view text, std::string_view prefix) {
    if (text.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(text[i])) !=
            std::tolower(static_cast<unsigned char>(prefix[i]))) {
            return false;
        }
    }
    return true;
}

}  // namespace detail

// Strips a leading "Rephrased Task Description:" label if the backbone echoes
// the template scaffold, then trims.
inline std::string clean_normalized_output(std::string_view raw) {
    std::string text = trim_copy(raw);
    if (detail::iequals_prefix(text, "rephrased task description")) {
        text = text.substr(std::string_view("rephrased task description").size());
        if (!text.empty() && text.front() == ':') text.erase(0, 1);
        text = trim_copy(text);
    }
    return text;
}

// One chat call (or cache hit) per task; the normalized text is stored
// verbatim after cleanup.
inline NormalizationRecord normalize_task(Gateway& gateway, const Task& task,
                                          const std::string& model_id, int max_output = 1024) {
    ChatRequest req;
    req.model_id = model_id;
    req.prompt = render_normalization_prompt(task);
    req.max_output = max_output;
    req.stage = "normalize";
    ChatResponse resp = gateway.chat(req);
    std::string normalized = clean_normalized_output(resp.text);
    if (normalized.empty()) {
        throw backend_error("normalization failure: empty model output for task '" + task.id +
                            "' in dataset '" + task.dataset_id + "'");
    }
    return {task.dataset_id, task.id, model_id, task.description, normalized};
}

struct NormalizeOutcome {
    Dataset dataset;                           // tasks with normalized_description set
    std::vector<NormalizationRecord> records;  // newly produced records
    std::vector<std::string> failures;         // per-task failure messages
};

// Normalizes every task of the dataset. Task order and ids are unchanged,
// Task.description is never mutated. Already-known rewrites (from a previous
// run's output file) are reused without any gateway traffic; per-task
// failures are collected rather than aborting the dataset.
inline NormalizeOutcome normalize_dataset(
    Gateway& gateway, const Dataset& ds, const std::string& model_id,
    const std::map<std::pair<std::string, std::string>, std::string>* existing = nullptr,
    jsonl_writer* sink = nullptr, int workers = 1, int max_output = 1024) {
    NormalizeOutcome out;
    out.dataset = ds;

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= ds.tasks.size()) return;
            const Task& task = ds.tasks[i];
            if (existing) {
                auto it = existing->find({task.dataset_id, task.id});
                if (it != existing->end()) {
                    std::lock_guard lock(mu);
                    out.dataset.tasks[i].normalized_description = it->second;
                    continue;
                }
            }
            try {
                NormalizationRecord rec = normalize_task(gateway, task, model_id, max_output);
                std::lock_guard lock(mu);
                out.dataset.tasks[i].normalized_description = rec.normalized;
                if (sink) {
                    sink->write(json{{"dataset_id", rec.dataset_id},
                                     {"task_id", rec.task_id},
                                     {"model_id", rec.model_id},
                                     {"normalized", rec.normalized}});
                }
                out.records.push_back(std::move(rec));
            } catch (const error& e) {
                std::lock_guard lock(mu);
                out.failures.emplace_back(e.what());
            }
        }
    };

    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return out;
}

// Loads a normalization output file into a (dataset_id, task_id) -> text map.
inline std::map<std::pair<std::string, std::string>, std::string> load_normalization_records(
    const std::filesystem::path& path) {
    std::map<std::pair<std::string, std::string>, std::string> out;
    if (!std::filesystem::exists(path)) return out;
    read_jsonl(path, [&](const json& record, std::size_t) {
        out[{record.at("dataset_id").get<std::string>(), record.at("task_id").get<std::string>()}] =
            record.at("normalized").get<std::string>();
    });
    return out;
}

}  // namespace tracer

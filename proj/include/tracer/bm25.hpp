#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tracer/errors.hpp"
#include "tracer/text.hpp"

namespace tracer {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

// Sparse inverted index with Okapi-style scoring:
//   score(q, d) = sum over query tokens of
//       IDF(t) * tf * (k1+1) / (tf + k1 * (1 - b + b * len/avglen))
//   IDF(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
// Repeated query tokens contribute once per occurrence.
class Bm25Index {
  public:
    static Bm25Index build(const std::vector<std::pair<std::string, std::string>>& docs,
                           Bm25Params params = {}) {
        Bm25Index index;
        index.params_ = params;
        std::uint64_t total_len = 0;
        for (const auto& [id, text] : docs) {
            if (index.doc_slot_.contains(id)) {
                throw data_error("bm25: duplicate document id '" + id + "'");
            }
            std::size_t slot = index.doc_lengths_.size();
            index.doc_slot_.emplace(id, slot);
            auto tokens = tokenize(text);
            index.doc_lengths_.push_back(tokens.size());
            total_len += tokens.size();

            std::unordered_map<std::string, std::uint32_t> tf;
            for (const auto& t : tokens) tf[t] += 1;
            for (const auto& [term, freq] : tf) {
                index.postings_[term].push_back({slot, freq});
            }
        }
        index.avg_doc_length_ =
            docs.empty() ? 0.0 : static_cast<double>(total_len) / docs.size();
        return index;
    }

    double score(const std::string& query, const std::string& doc_id) const {
        auto it = doc_slot_.find(doc_id);
        if (it == doc_slot_.end()) throw data_error("bm25: unknown document id '" + doc_id + "'");
        std::size_t slot = it->second;
        double len = static_cast<double>(doc_lengths_[slot]);
        double norm = params_.k1 * (1.0 - params_.b +
                                    (avg_doc_length_ > 0.0
                                         ? params_.b * len / avg_doc_length_
                                         : 0.0));
        double total = 0.0;
        for (const auto& token : tokenize(query)) {
            auto post = postings_.find(token);
            if (post == postings_.end()) continue;
            double tf = 0.0;
            for (const auto& [doc, freq] : post->second) {
                if (doc == slot) {
                    tf = freq;
                    break;
                }
            }
            if (tf == 0.0) continue;
            total += idf(token) * tf * (params_.k1 + 1.0) / (tf + norm);
        }
        return total;
    }

    double idf(const std::string& term) const {
        auto it = postings_.find(term);
        double df = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
        double n = static_cast<double>(doc_lengths_.size());
        return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    }

    std::size_t doc_count() const { return doc_lengths_.size(); }
    double avg_doc_length() const { return avg_doc_length_; }
    const Bm25Params& params() const { return params_; }

  private:
    struct Posting {
        std::size_t doc;
        std::uint32_t freq;
    };

    Bm25Params params_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::unordered_map<std::string, std::size_t> doc_slot_;
    std::vector<std::size_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
};

}  // namespace tracer

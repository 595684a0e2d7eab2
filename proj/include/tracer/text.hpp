#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace tracer {

// Lowercase alphanumeric runs; shared by the BM25 baseline and the mock
// embedding backend.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

}  // namespace tracer

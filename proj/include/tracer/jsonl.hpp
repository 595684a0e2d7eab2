#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <utility>

#include <json.hpp>

#include "tracer/errors.hpp"

namespace tracer {

using json = nlohmann::json;

// Calls fn(record, line_number) for every non-blank line. Line numbers are
// 1-based so error messages point at the offending input line.
inline void read_jsonl(const std::filesystem::path& path,
                       const std::function<void(const json&, std::size_t)>& fn) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open file: " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json record = json::parse(line, nullptr, false);
        if (record.is_discarded()) {
            throw data_error(path.string() + ":" + std::to_string(line_no) +
                             ": malformed record (invalid JSON)");
        }
        fn(record, line_no);
    }
}

// Append-only JSONL writer, flushed per record so partial runs survive.
class jsonl_writer {
  public:
    explicit jsonl_writer(const std::filesystem::path& path, bool append = true)
        : path_(path), out_(path, append ? std::ios::app : std::ios::trunc) {
        if (!out_) throw data_error("cannot open file for writing: " + path.string());
    }

    void write(const json& record) {
        out_ << record.dump() << '\n';
        out_.flush();
        if (!out_) throw data_error("write failed: " + path_.string());
    }

    // Pre-rendered line, for records whose number formatting is pinned.
    void write_raw(const std::string& line) {
        out_ << line << '\n';
        out_.flush();
        if (!out_) throw data_error("write failed: " + path_.string());
    }

    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
    std::ofstream out_;
};

inline std::string trim_copy(std::string_view s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace tracer

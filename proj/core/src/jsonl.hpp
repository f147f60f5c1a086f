#pragma once

// Internal JSON/JSONL helpers shared by the file-format readers.

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

#include "snps3/errors.hpp"

namespace snps3::detail {

using nlohmann::json;

inline constexpr const char* kHeaderKey = "_header";

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

/// Calls `fn(record, line_no)` for every non-blank, non-header line.
inline void for_each_jsonl(const std::filesystem::path& path, const std::function<void(const json&, std::size_t)>& fn) {
    auto in = open_in(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!record.is_object()) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected object");
        if (record.contains(kHeaderKey)) continue;
        try {
            fn(record, line_no);
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

inline json read_json_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace snps3::detail

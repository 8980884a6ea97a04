#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace evidence {

struct JsonLine {
  std::size_t line_no; ///< 1-based
  nlohmann::json value;
};

/// Reads a line-delimited JSON file, skipping blank lines. Throws
/// std::runtime_error naming the file and line on unreadable input.
std::vector<JsonLine> read_jsonl(const std::filesystem::path& path);

std::string to_jsonl(const std::vector<nlohmann::json>& rows);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

} // namespace evidence

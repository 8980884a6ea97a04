#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evidence/response_parser.hpp"

namespace evidence {

/// One line of a parser fixture corpus:
///   {"raw": "...", "expected_boxes": [[x1, y1, x2, y2], ...],
///    "expected_choice": "B" | null, "expected_format_ok": true}
struct ConformanceCase {
  std::size_t line_no = 0;
  std::string raw;
  std::vector<Box> expected_boxes;
  std::optional<OptionLetter> expected_choice;
  bool expected_format_ok = false;
};

struct ConformanceResult {
  std::size_t line_no = 0;
  bool pass = false;
  std::string detail; ///< empty on pass
};

std::vector<ConformanceCase> load_conformance_corpus(const std::filesystem::path& path);

ConformanceResult check_case(const ConformanceCase& c);
std::vector<ConformanceResult> run_conformance(const std::vector<ConformanceCase>& cases);

} // namespace evidence

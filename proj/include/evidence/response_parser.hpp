#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "evidence/geometry.hpp"

namespace evidence {

inline constexpr std::string_view kParserVersion = "parser/1";

/// One of the six answer letters A-F.
class OptionLetter {
public:
  explicit OptionLetter(char c);
  static std::optional<OptionLetter> from(char c) noexcept;
  static std::optional<OptionLetter> from(std::string_view s) noexcept;

  char value() const noexcept { return c_; }
  std::string str() const { return std::string(1, c_); }

  friend auto operator<=>(const OptionLetter&, const OptionLetter&) = default;

private:
  char c_;
};

using LetterSet = std::set<OptionLetter>;

/// A through F.
const LetterSet& all_letters();

/// A bracketed or parenthesized numeric quadruple at text[begin, end).
struct QuadrupleMatch {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::array<double, 4> values{};
};

/// Every non-overlapping numeric quadruple in textual order, valid as a Box
/// or not.
std::vector<QuadrupleMatch> scan_quadruples(std::string_view text);

struct BoxExtraction {
  std::vector<Box> boxes;
  /// Quadruples that matched the syntax but failed Box validation.
  int skipped_invalid = 0;
};

struct ParsedResponse {
  std::string raw;
  std::optional<std::string> think;
  std::optional<std::string> answer;
  std::vector<Box> boxes;
  std::optional<OptionLetter> choice;
  bool format_ok = false;
  int skipped_invalid_boxes = 0;
};

/// Finds `[n, n, n, n]`, `(n, n, n, n)` and `"bbox_2d": [n, n, n, n]` in
/// textual order. Quadruples that do not form a valid Box are skipped and
/// tallied.
BoxExtraction extract_boxes(std::string_view text);

/// Picks the selected option letter from free answer text:
///   1. the whole trimmed text is one allowed letter;
///   2. delimited forms such as "(C)", "C.", "answer is C", "option C";
///   3. standalone capital-letter tokens.
/// The first tier that yields any letter decides; more than one distinct
/// letter in that tier is ambiguous and yields nullopt.
std::optional<OptionLetter> extract_choice(std::string_view answer_text,
                                           const LetterSet& allowed = all_letters());

/// Total: never throws. format_ok requires exactly one think block followed
/// by exactly one answer block with only whitespace around them. Boxes come
/// from the think segment when format_ok, otherwise from the whole text.
ParsedResponse parse_response(std::string_view raw, const LetterSet& allowed = all_letters());

/// Builds a well-formed response whose think block interleaves text and
/// boxes (rendered "[x1, y1, x2, y2]").
using ThinkPiece = std::variant<std::string, Box>;
std::string render_response(const std::vector<ThinkPiece>& think, std::string_view answer);

} // namespace evidence

#include "evidence/response_parser.hpp"

#include <array>
#include <cctype>

#include "evidence/numfmt.hpp"

namespace evidence {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool all_space(std::string_view s) {
  for (char c : s)
    if (!is_space(c))
      return false;
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front()))
    s.remove_prefix(1);
  while (!s.empty() && is_space(s.back()))
    s.remove_suffix(1);
  return s;
}

size_t count_of(std::string_view hay, std::string_view needle) {
  size_t n = 0;
  for (size_t pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size()))
    ++n;
  return n;
}

// Parses "[n, n, n, n]" or "(n, n, n, n)" starting at text[pos]. On success
// returns the four numbers and sets `end` one past the closing bracket.
std::optional<std::array<double, 4>> scan_quadruple(std::string_view text, size_t pos,
                                                    size_t& end) {
  const char open = text[pos];
  const char close = open == '[' ? ']' : ')';
  size_t i = pos + 1;
  auto skip_ws = [&] {
    while (i < text.size() && is_space(text[i]))
      ++i;
  };
  std::array<double, 4> v{};
  for (int k = 0; k < 4; ++k) {
    skip_ws();
    const size_t start = i;
    while (i < text.size() &&
           (text[i] == '-' || text[i] == '.' || (text[i] >= '0' && text[i] <= '9')))
      ++i;
    auto num = parse_decimal(text.substr(start, i - start));
    if (!num)
      return std::nullopt;
    v[k] = *num;
    skip_ws();
    if (k < 3) {
      if (i >= text.size() || text[i] != ',')
        return std::nullopt;
      ++i;
    }
  }
  if (i >= text.size() || text[i] != close)
    return std::nullopt;
  end = i + 1;
  return v;
}

bool letter_token_at(std::string_view s, size_t i) {
  const bool left_ok = i == 0 || !is_alnum(s[i - 1]);
  const bool right_ok = i + 1 >= s.size() || !is_alnum(s[i + 1]);
  return left_ok && right_ok;
}

bool iequals_at(std::string_view s, size_t i, std::string_view word) {
  if (i + word.size() > s.size())
    return false;
  for (size_t k = 0; k < word.size(); ++k)
    if (std::tolower(static_cast<unsigned char>(s[i + k])) != word[k])
      return false;
  return true;
}

// "answer is C", "answer: (C)", "option C", "choice: C"
void keyword_letters(std::string_view s, const LetterSet& allowed, LetterSet& out) {
  static constexpr std::array<std::string_view, 3> kKeywords{"answer", "option", "choice"};
  for (size_t i = 0; i < s.size(); ++i) {
    for (std::string_view kw : kKeywords) {
      if (!iequals_at(s, i, kw) || (i > 0 && is_alnum(s[i - 1])))
        continue;
      size_t j = i + kw.size();
      auto skip_ws = [&] {
        while (j < s.size() && is_space(s[j]))
          ++j;
      };
      skip_ws();
      if (iequals_at(s, j, "is") && (j + 2 >= s.size() || !is_alnum(s[j + 2]))) {
        j += 2;
        skip_ws();
      }
      if (j < s.size() && s[j] == ':') {
        ++j;
        skip_ws();
      }
      if (j < s.size() && s[j] == '(')
        ++j;
      if (j < s.size() && letter_token_at(s, j))
        if (auto l = OptionLetter::from(s[j]); l && allowed.contains(*l))
          out.insert(*l);
    }
  }
}

std::optional<OptionLetter> decide(const LetterSet& found) {
  if (found.size() == 1)
    return *found.begin();
  return std::nullopt;
}

} // namespace

OptionLetter::OptionLetter(char c) : c_(c) {
  if (c < 'A' || c > 'F')
    throw std::invalid_argument(std::string("option letter must be A-F, got '") + c + "'");
}

std::optional<OptionLetter> OptionLetter::from(char c) noexcept {
  if (c < 'A' || c > 'F')
    return std::nullopt;
  return OptionLetter(c);
}

std::optional<OptionLetter> OptionLetter::from(std::string_view s) noexcept {
  if (s.size() != 1)
    return std::nullopt;
  return from(s.front());
}

const LetterSet& all_letters() {
  static const LetterSet letters = [] {
    LetterSet s;
    for (char c = 'A'; c <= 'F'; ++c)
      s.insert(OptionLetter(c));
    return s;
  }();
  return letters;
}

std::vector<QuadrupleMatch> scan_quadruples(std::string_view text) {
  std::vector<QuadrupleMatch> out;
  size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '[' && text[i] != '(') {
      ++i;
      continue;
    }
    size_t end = 0;
    if (auto q = scan_quadruple(text, i, end)) {
      out.push_back({i, end, *q});
      i = end;
    } else {
      ++i;
    }
  }
  return out;
}

BoxExtraction extract_boxes(std::string_view text) {
  BoxExtraction out;
  for (const auto& m : scan_quadruples(text)) {
    const auto& v = m.values;
    if (Box::valid(v[0], v[1], v[2], v[3]))
      out.boxes.emplace_back(v[0], v[1], v[2], v[3]);
    else
      ++out.skipped_invalid;
  }
  return out;
}

std::optional<OptionLetter> extract_choice(std::string_view answer_text, const LetterSet& allowed) {
  const std::string_view s = trim(answer_text);

  if (auto l = OptionLetter::from(s); l && allowed.contains(*l))
    return l;

  LetterSet delimited;
  for (size_t i = 0; i < s.size(); ++i) {
    auto l = OptionLetter::from(s[i]);
    if (!l || !allowed.contains(*l) || !letter_token_at(s, i))
      continue;
    const bool paren = i > 0 && s[i - 1] == '(' && i + 1 < s.size() && s[i + 1] == ')';
    bool trailing = false;
    if (i + 1 < s.size()) {
      const char n = s[i + 1];
      const bool next_ends = i + 2 >= s.size() || !is_alnum(s[i + 2]);
      trailing = (n == ')' || n == ':' || n == '.') && next_ends;
    }
    if (paren || trailing)
      delimited.insert(*l);
  }
  keyword_letters(s, allowed, delimited);
  if (!delimited.empty())
    return decide(delimited);

  LetterSet standalone;
  for (size_t i = 0; i < s.size(); ++i)
    if (auto l = OptionLetter::from(s[i]); l && allowed.contains(*l) && letter_token_at(s, i))
      standalone.insert(*l);
  return decide(standalone);
}

ParsedResponse parse_response(std::string_view raw, const LetterSet& allowed) {
  ParsedResponse r;
  r.raw = std::string(raw);

  const size_t think_open = raw.find(kThinkOpen);
  const size_t think_close = raw.find(kThinkClose, think_open == std::string_view::npos
                                                       ? 0
                                                       : think_open + kThinkOpen.size());
  const size_t answer_open = raw.find(kAnswerOpen);
  const size_t answer_close = answer_open == std::string_view::npos
                                  ? std::string_view::npos
                                  : raw.find(kAnswerClose, answer_open + kAnswerOpen.size());

  if (think_open != std::string_view::npos) {
    const size_t begin = think_open + kThinkOpen.size();
    size_t end = think_close;
    if (end == std::string_view::npos)
      end = answer_open != std::string_view::npos && answer_open > begin ? answer_open : raw.size();
    r.think = std::string(raw.substr(begin, end - begin));
  } else if (think_close != std::string_view::npos) {
    r.think = std::string(raw.substr(0, think_close));
  }

  if (answer_open != std::string_view::npos) {
    const size_t begin = answer_open + kAnswerOpen.size();
    const size_t end = answer_close == std::string_view::npos ? raw.size() : answer_close;
    r.answer = std::string(raw.substr(begin, end - begin));
  }

  r.format_ok = count_of(raw, kThinkOpen) == 1 && count_of(raw, kThinkClose) == 1 &&
                count_of(raw, kAnswerOpen) == 1 && count_of(raw, kAnswerClose) == 1 &&
                think_open < think_close && think_close < answer_open &&
                answer_open < answer_close && all_space(raw.substr(0, think_open)) &&
                all_space(raw.substr(think_close + kThinkClose.size(),
                                     answer_open - think_close - kThinkClose.size())) &&
                all_space(raw.substr(answer_close + kAnswerClose.size()));

  BoxExtraction boxes = r.format_ok ? extract_boxes(*r.think) : extract_boxes(raw);
  r.boxes = std::move(boxes.boxes);
  r.skipped_invalid_boxes = boxes.skipped_invalid;

  r.choice = extract_choice(r.answer ? std::string_view(*r.answer) : raw, allowed);
  return r;
}

std::string render_response(const std::vector<ThinkPiece>& think, std::string_view answer) {
  std::string out(kThinkOpen);
  for (const ThinkPiece& piece : think) {
    if (const auto* text = std::get_if<std::string>(&piece))
      out += *text;
    else
      out += to_string(std::get<Box>(piece));
  }
  out += kThinkClose;
  out += kAnswerOpen;
  out += answer;
  out += kAnswerClose;
  return out;
}

} // namespace evidence

#include "evidence/conformance.hpp"

#include "evidence/jsonl.hpp"

namespace evidence {

namespace {

std::string describe(const std::vector<Box>& boxes) {
  std::string s = "[";
  for (size_t i = 0; i < boxes.size(); ++i)
    s += (i ? ", " : "") + to_string(boxes[i]);
  return s + "]";
}

} // namespace

std::vector<ConformanceCase> load_conformance_corpus(const std::filesystem::path& path) {
  std::vector<ConformanceCase> out;
  for (const auto& [line_no, row] : read_jsonl(path)) {
    ConformanceCase c;
    c.line_no = line_no;
    try {
      c.raw = row.at("raw").get<std::string>();
      for (const auto& b : row.at("expected_boxes"))
        c.expected_boxes.emplace_back(b.at(0).get<double>(), b.at(1).get<double>(),
                                      b.at(2).get<double>(), b.at(3).get<double>());
      const auto& choice = row.at("expected_choice");
      if (!choice.is_null()) {
        c.expected_choice = OptionLetter::from(choice.get<std::string>());
        if (!c.expected_choice)
          throw std::invalid_argument("expected_choice must be A-F or null");
      }
      c.expected_format_ok = row.at("expected_format_ok").get<bool>();
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(c));
  }
  return out;
}

ConformanceResult check_case(const ConformanceCase& c) {
  const ParsedResponse p = parse_response(c.raw);
  ConformanceResult r{c.line_no, true, {}};
  auto fail = [&](const std::string& what) {
    r.pass = false;
    r.detail += (r.detail.empty() ? "" : "; ") + what;
  };
  if (p.boxes != c.expected_boxes)
    fail("boxes " + describe(p.boxes) + " != expected " + describe(c.expected_boxes));
  if (p.choice != c.expected_choice)
    fail("choice " + (p.choice ? p.choice->str() : "none") + " != expected " +
         (c.expected_choice ? c.expected_choice->str() : "none"));
  if (p.format_ok != c.expected_format_ok)
    fail(std::string("format_ok ") + (p.format_ok ? "true" : "false") + " != expected " +
         (c.expected_format_ok ? "true" : "false"));
  return r;
}

std::vector<ConformanceResult> run_conformance(const std::vector<ConformanceCase>& cases) {
  std::vector<ConformanceResult> out;
  out.reserve(cases.size());
  for (const auto& c : cases)
    out.push_back(check_case(c));
  return out;
}

} // namespace evidence

#include <doctest.h>

#include <random>

#include "evidence/conformance.hpp"
#include "evidence/numfmt.hpp"
#include "evidence/response_parser.hpp"

using namespace evidence;

TEST_CASE("numbers round trip through format_number") {
  for (double v : {0.0, 1.0, -3.5, 0.1, 1234.5678, 1e-7, 640.0})
    CHECK(parse_decimal(format_number(v)).value_or(-999) == v);
  CHECK(format_number(12.0) == "12");
  CHECK(parse_decimal(".25") == 0.25);
  CHECK_FALSE(parse_decimal("1e3"));
  CHECK_FALSE(parse_decimal(" 1"));
  CHECK_FALSE(parse_decimal(""));
}

TEST_CASE("option letters") {
  CHECK(OptionLetter::from('C')->value() == 'C');
  CHECK_FALSE(OptionLetter::from('G'));
  CHECK_FALSE(OptionLetter::from('a'));
  CHECK_FALSE(OptionLetter::from("AB"));
  CHECK_THROWS(OptionLetter('Z'));
}

TEST_CASE("well-formed response") {
  auto p = parse_response("<think>the cup [10, 20, 30, 40] and (1, 2, 3, 4)</think><answer>B</answer>");
  CHECK(p.format_ok);
  REQUIRE(p.boxes.size() == 2);
  CHECK(p.boxes[0] == Box(10, 20, 30, 40));
  CHECK(p.boxes[1] == Box(1, 2, 3, 4));
  CHECK(p.choice == OptionLetter('B'));
  CHECK(*p.answer == "B");
}

TEST_CASE("invalid quadruples are skipped and counted") {
  auto e = extract_boxes("[5, 5, 5, 9] [0, 0, 2, 2] [3, 1, 2, 4]");
  CHECK(e.boxes == std::vector<Box>{Box(0, 0, 2, 2)});
  CHECK(e.skipped_invalid == 2);
  CHECK(extract_boxes(R"({"bbox_2d": [1.5, 2, 3, 4.25]})").boxes ==
        std::vector<Box>{Box(1.5, 2, 3, 4.25)});
}

TEST_CASE("choice tiers") {
  CHECK(extract_choice("C") == OptionLetter('C'));
  CHECK(extract_choice(" (D) ") == OptionLetter('D'));
  CHECK(extract_choice("The answer is B.") == OptionLetter('B'));
  CHECK(extract_choice("A or B") == std::nullopt);
  CHECK(extract_choice("(A) I think, not (B)") == std::nullopt);
  CHECK(extract_choice("E", LetterSet{OptionLetter('A'), OptionLetter('B')}) == std::nullopt);
  CHECK(extract_choice("") == std::nullopt);
}

TEST_CASE("choice falls back to raw text when the answer block is missing") {
  auto p = parse_response("I would go with (C).");
  CHECK_FALSE(p.format_ok);
  CHECK(p.choice == OptionLetter('C'));
}

TEST_CASE("parse_response never throws on hostile input") {
  std::mt19937 rng(3);
  const std::string alphabet = "<>/thinkanswer[](),.0123456789- ABCDEF\n\"";
  std::uniform_int_distribution<size_t> pick(0, alphabet.size() - 1), len(0, 200);
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    for (size_t n = len(rng); n > 0; --n)
      s += alphabet[pick(rng)];
    REQUIRE_NOTHROW(parse_response(s));
  }
}

TEST_CASE("fixture corpus") {
  const auto cases = load_conformance_corpus(EVIDENCE_FIXTURES "/parser_corpus.jsonl");
  REQUIRE(cases.size() >= 60);
  for (const auto& r : run_conformance(cases)) {
    INFO("line " << r.line_no << ": " << r.detail);
    CHECK(r.pass);
  }
}

TEST_CASE("render then parse round-trips boxes and answer in order") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> nbox(0, 6), coord(0, 2000), letter(0, 5), words(0, 4);
  std::uniform_int_distribution<int> frac(0, 1);
  const std::vector<std::string> filler = {"look at ", "the red mug ", "near ", "then ", ""};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<ThinkPiece> pieces;
    std::vector<Box> boxes;
    for (int i = nbox(rng); i > 0; --i) {
      pieces.emplace_back(filler[words(rng)]);
      double x1 = coord(rng), y1 = coord(rng);
      double x2 = x1 + 1 + coord(rng), y2 = y1 + 1 + coord(rng);
      if (frac(rng))
        x1 += 0.5;
      boxes.emplace_back(x1, y1, x2, y2);
      pieces.emplace_back(boxes.back());
    }
    const char c = static_cast<char>('A' + letter(rng));
    const auto p = parse_response(render_response(pieces, std::string(1, c)));
    REQUIRE(p.format_ok);
    REQUIRE(p.boxes == boxes);
    REQUIRE(p.choice == OptionLetter(c));
  }
}

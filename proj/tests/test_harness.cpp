#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "evidence/harness.hpp"
#include "evidence/hashing.hpp"
#include "evidence/jsonl.hpp"
#include "evidence/report.hpp"
#include "fakes.hpp"
#include "models.hpp"

using namespace evidence;

namespace {

std::vector<BenchmarkSample> bench40() { return load_dataset(EVIDENCE_FIXTURES "/bench40.jsonl"); }

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "evidence_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

EvalOptions fast_options() {
  EvalOptions o;
  o.retry_backoff = std::chrono::milliseconds(1);
  return o;
}

nlohmann::json base_row() {
  return nlohmann::json::parse(R"({"id": "x1", "image": "a.jpg", "dims": {"width": 100, "height": 80},
    "category": "OCR", "question": "What does the sign say?",
    "options": [{"letter": "A", "text": "stop"}, {"letter": "B", "text": "go"}],
    "answer": "B", "target_boxes": [[1, 2, 30, 40]]})");
}

} // namespace

TEST_CASE("category names and protocols") {
  for (auto c : kAllCategories)
    CHECK(parse_category(to_string(c)) == c);
  CHECK(parse_category("Contact and Occlusion") == Category::ContactOcclusion);
  CHECK_FALSE(parse_category("Colour"));
  CHECK(protocol_of(Category::OCR) == Protocol::Perception);
  CHECK(protocol_of(Category::PerspectiveTransform) == Protocol::Reasoning);
}

TEST_CASE("sample validation") {
  auto s = sample_from_json(base_row());
  CHECK(s.protocol == Protocol::Perception);
  CHECK(s.letters() == LetterSet{OptionLetter('A'), OptionLetter('B')});
  CHECK(sample_from_json(to_json(s)) .id == "x1");
  CHECK(to_json(sample_from_json(to_json(s))) == to_json(s));

  auto bad = [](auto mutate) {
    auto row = base_row();
    mutate(row);
    return row;
  };
  CHECK_THROWS_AS(sample_from_json(bad([](auto& r) { r["answer"] = "C"; })), std::invalid_argument);
  CHECK_THROWS_AS(sample_from_json(bad([](auto& r) { r["target_boxes"] = {{5, 5, 5, 9}}; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(sample_from_json(bad([](auto& r) { r["target_boxes"] = nlohmann::json::array(); })),
                  std::invalid_argument);
  CHECK_THROWS_AS(sample_from_json(bad([](auto& r) { r["category"] = "Colour"; })), std::invalid_argument);
  CHECK_THROWS_AS(sample_from_json(bad([](auto& r) { r["protocol"] = "Reasoning"; })), std::invalid_argument);
  CHECK_THROWS_AS(sample_from_json(bad([](auto& r) { r["dims"]["width"] = 0; })), std::invalid_argument);
  CHECK_THROWS_AS(sample_from_json(bad([](auto& r) { r.erase("question"); })), std::invalid_argument);
}

TEST_CASE("load_dataset reports offending lines") {
  const auto path = scratch("bad_dataset.jsonl");
  {
    std::ofstream out(path);
    out << base_row().dump() << "\n";
    auto r2 = base_row();
    r2["id"] = "x2";
    r2["answer"] = "Q";
    out << r2.dump() << "\n\n";
    auto r4 = base_row();
    r4["id"] = "x4";
    r4["target_boxes"] = {{10, 10, 5, 20}};
    out << r4.dump() << "\n";
    out << base_row().dump() << "\n"; // duplicate id
  }
  try {
    load_dataset(path);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    REQUIRE(e.problems.size() == 3);
    CHECK(e.problems[0].starts_with("line 2:"));
    CHECK(e.problems[1].starts_with("line 4:"));
    CHECK(e.problems[2].starts_with("line 5:"));
  }
  CHECK_THROWS_AS(load_dataset(scratch("does_not_exist.jsonl")), std::runtime_error);
}

TEST_CASE("fixture shape") {
  const auto samples = bench40();
  REQUIRE(samples.size() == 40);
  std::map<Category, int> per;
  for (const auto& s : samples)
    ++per[s.category];
  for (auto c : kAllCategories)
    CHECK(per[c] == 4);
}

TEST_CASE("prompt rendering") {
  const auto s = sample_from_json(base_row());
  const auto text = render_prompt(PromptTemplate::builtin_eval(), s);
  CHECK(text.find("What does the sign say?") != std::string::npos);
  CHECK(text.find("(A) stop") != std::string::npos);
  CHECK(text.find("(B) go") != std::string::npos);
  CHECK(text.find("{{") == std::string::npos);
}

TEST_CASE("chat model request carries image, prompt and seed") {
  auto s = sample_from_json(base_row());
  const auto root = scratch("images");
  std::filesystem::create_directories(root);
  write_text(root / "a.jpg", "JPEGDATA");
  auto chat = std::make_shared<fakes::ScriptedChat>([](const nlohmann::json&) { return "x"; });
  ChatModelClient client(chat, {"vlm", root, true, 512});
  auto req = client.build_request(s, "PROMPT", 0x1'0000'0005ULL);
  const auto dump = req.dump();
  CHECK(dump.find("data:image/jpeg;base64," + base64_encode("JPEGDATA")) != std::string::npos);
  CHECK(dump.find("PROMPT") != std::string::npos);
  CHECK(req["temperature"] == 0);
  CHECK(req["max_tokens"] == 512);
  CHECK(req["seed"] == 5);
  CHECK(client.answer(s, "PROMPT", 1) == "x");

  s.image_ref = "https://example.org/a.jpg";
  CHECK(client.build_request(s, "p", 1).dump().find("https://example.org/a.jpg") != std::string::npos);

  ChatModelClient no_images(chat, {"vlm", root, false, 512});
  CHECK(no_images.build_request(s, "p", 1).dump().find("image_url") == std::string::npos);
}

TEST_CASE("oracle and always-A models") {
  const auto samples = bench40();
  models::FnModel oracle("oracle", models::oracle_response);
  auto rep = build_report(evaluate(oracle, samples, fast_options()), samples, ReportMeta{"oracle", "", "", 0});
  CHECK(rep.accuracy == 100.0);
  CHECK(rep.miou == 1.0);
  CHECK(rep.miou_recall == 1.0);
  for (const auto& g : rep.per_category) {
    CHECK(g.total == 4);
    CHECK(g.accuracy == 100.0);
  }

  models::FnModel always_a("always-a", models::always_a_response);
  auto a = build_report(evaluate(always_a, samples, fast_options()), samples);
  CHECK(a.correct == 10);
  CHECK(a.accuracy == 25.0);
  CHECK(a.miou == 0.0);
  CHECK(a.answer_letters.at("A") == 10);
}

TEST_CASE("per-category accuracy matches a hand count") {
  const auto samples = bench40();
  // correct on the first k questions of each category, where k = index % 5
  std::map<std::string, bool> plan;
  std::map<Category, int> seen;
  for (const auto& s : samples) {
    const int idx = static_cast<int>(std::find(kAllCategories.begin(), kAllCategories.end(), s.category) -
                                     kAllCategories.begin());
    plan[s.id] = seen[s.category]++ < idx % 5;
  }
  models::FnModel model("partial", [&](const BenchmarkSample& s) {
    if (plan[s.id])
      return models::oracle_response(s);
    const char wrong = s.answer.value() == 'A' ? 'B' : 'A';
    return "<think>no boxes</think><answer>" + std::string(1, wrong) + "</answer>";
  });
  auto rep = build_report(evaluate(model, samples, fast_options()), samples);
  const double expected[] = {0, 25, 50, 75, 100, 0, 25, 50, 75, 100};
  for (size_t i = 0; i < 10; ++i) {
    CHECK(rep.per_category[i].name == to_string(kAllCategories[i]));
    CHECK(rep.per_category[i].accuracy == expected[i]);
    CHECK(rep.per_category[i].miou == doctest::Approx(expected[i] / 100));
  }
  CHECK(rep.per_protocol[0].accuracy == 50.0);
  CHECK(rep.per_protocol[1].accuracy == 50.0);
  CHECK(rep.correct == 20);
  // correct answers carry perfect boxes, wrong ones none
  CHECK(rep.iou_correct_auc == 1.0);
  CHECK(rep.iou_histograms.at("correct").counts.back() == 20);
  CHECK(rep.iou_histograms.at("wrong").counts.front() == 20);
}

TEST_CASE("untagged responses score zero format but still count letters") {
  const auto samples = bench40();
  models::FnModel model("plain", [](const BenchmarkSample& s) { return s.answer.str(); });
  auto records = evaluate(model, samples, fast_options());
  for (const auto& r : records) {
    CHECK_FALSE(r.parsed.format_ok);
    CHECK(r.correct);
  }
}

TEST_CASE("transport failures are retried, then recorded as unanswered") {
  const auto samples = bench40();
  auto chat = models::chat_for(samples, models::oracle_response);
  auto flaky = std::make_shared<fakes::FlakyChat>(1, chat);
  ChatModelClient client(flaky, {"m", {}, false, 64});
  auto o = fast_options();
  o.max_parallel = 1;
  auto records = evaluate(client, std::span(samples).first(3), o);
  CHECK(records[0].attempts == 2);
  CHECK(records[0].correct);
  CHECK(records[1].attempts == 1);

  auto dead = std::make_shared<fakes::FlakyChat>(1000, chat);
  ChatModelClient down(dead, {"m", {}, false, 64});
  auto failed = evaluate(down, std::span(samples).first(2), o);
  CHECK(failed[0].unanswered);
  CHECK(failed[0].attempts == 3);
  CHECK_FALSE(failed[0].correct);
  auto rep = build_report(failed, std::span(samples).first(2));
  CHECK(rep.unanswered == 2);
  CHECK(rep.accuracy == 0);
}

TEST_CASE("records round-trip and regenerate a byte-identical report") {
  const auto samples = bench40();
  models::FnModel model("partial", [](const BenchmarkSample& s) {
    return s.id.back() % 2 ? models::oracle_response(s) : models::always_a_response(s);
  });
  auto o = fast_options();
  o.max_parallel = 8;
  const auto records = evaluate(model, samples, o);
  const ReportMeta meta{"partial", o.prompt.name, o.prompt.hash(), 0};
  const auto first = build_report(records, samples, meta);

  std::vector<nlohmann::json> rows;
  for (const auto& r : records)
    rows.push_back(to_json(r));
  const auto path = scratch("records.jsonl");
  write_text(path, to_jsonl(rows));
  const auto again = build_report(load_records(path, samples), samples, meta);
  CHECK(render_json(first) == render_json(again));
  CHECK(render_markdown(first) == render_markdown(again));
  CHECK(render_category_csv(first) == render_category_csv(again));
  CHECK(render_histogram_csv(first) == render_histogram_csv(again));

  // serial evaluation gives the same report
  o.max_parallel = 1;
  CHECK(render_json(build_report(evaluate(model, samples, o), samples, meta)) == render_json(first));
}

TEST_CASE("report input validation") {
  const auto samples = bench40();
  models::FnModel model("m", models::oracle_response);
  auto records = evaluate(model, samples, fast_options());
  CHECK_THROWS_AS(build_report({}, samples), std::invalid_argument);
  auto dup = records;
  dup[1].id = dup[0].id;
  CHECK_THROWS_AS(build_report(dup, samples), std::invalid_argument);
  CHECK_THROWS_AS(build_report(std::span(records).first(39), samples), std::invalid_argument);
}

TEST_CASE("histogram binning") {
  Histogram h;
  h.add(0.0);
  h.add(0.049);
  h.add(0.05);
  h.add(1.0);
  h.add(7.0);
  h.add(-1.0);
  CHECK(h.counts[0] == 3);
  CHECK(h.counts[1] == 1);
  CHECK(h.counts[19] == 2);
  CHECK(h.total() == 6);
}

TEST_CASE("consensus filter drops questions every model solved") {
  auto samples = bench40();
  samples.resize(10);
  VerdictTable table;
  for (int m = 0; m < 4; ++m) {
    std::vector<EvalRecord> records;
    for (size_t i = 0; i < samples.size(); ++i) {
      EvalRecord r;
      r.id = samples[i].id;
      // the first three are solved by everyone
      r.correct = i < 3 || (i + static_cast<size_t>(m)) % 4 == 0;
      records.push_back(r);
    }
    add_verdicts(table, records);
  }
  const auto kept = consensus_filter(samples, table);
  REQUIRE(kept.size() == 7);
  CHECK(kept.front().id == samples[3].id);

  table.erase(samples[5].id);
  try {
    consensus_filter(samples, table);
    FAIL("expected MissingVerdicts");
  } catch (const MissingVerdicts& e) {
    CHECK(e.ids == std::vector<std::string>{samples[5].id});
  }
}

#include "evidence/harness.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include "evidence/hashing.hpp"
#include "evidence/jsonl.hpp"
#include "evidence/parallel.hpp"

namespace evidence {

namespace {

struct CategoryName {
  Category category;
  std::string_view name;
};

constexpr std::array<CategoryName, 10> kCategoryNames{{
    {Category::Attributes, "Attributes"},
    {Category::Material, "Material"},
    {Category::PhysicalState, "Physical State"},
    {Category::ObjectRetrieval, "Object Retrieval"},
    {Category::OCR, "OCR"},
    {Category::PerspectiveTransform, "Perspective Transform"},
    {Category::Ordering, "Ordering"},
    {Category::ContactOcclusion, "Contact & Occlusion"},
    {Category::SpatialContainment, "Spatial Containment"},
    {Category::Comparison, "Comparison"},
}};

Box box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4)
    throw std::invalid_argument("box must be a 4-element array");
  for (const auto& v : j)
    if (!v.is_number())
      throw std::invalid_argument("box coordinates must be numbers");
  return Box(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

const nlohmann::json& field(const nlohmann::json& row, const char* name) {
  if (!row.contains(name))
    throw std::invalid_argument(std::string("missing field '") + name + "'");
  return row.at(name);
}

std::string string_field(const nlohmann::json& row, const char* name) {
  const auto& v = field(row, name);
  if (!v.is_string())
    throw std::invalid_argument(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

std::string mime_for(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png")
    return "image/png";
  if (ext == ".webp")
    return "image/webp";
  if (ext == ".gif")
    return "image/gif";
  return "image/jpeg";
}

bool is_url(std::string_view s) { return s.starts_with("http://") || s.starts_with("https://"); }

} // namespace

std::string_view to_string(Category c) {
  for (const auto& cn : kCategoryNames)
    if (cn.category == c)
      return cn.name;
  return "?";
}

std::string_view to_string(Protocol p) { return p == Protocol::Perception ? "Perception" : "Reasoning"; }

std::optional<Category> parse_category(std::string_view s) {
  for (const auto& cn : kCategoryNames)
    if (cn.name == s)
      return cn.category;
  if (s == "Contact and Occlusion")
    return Category::ContactOcclusion;
  return std::nullopt;
}

std::optional<Protocol> parse_protocol(std::string_view s) {
  if (s == "Perception")
    return Protocol::Perception;
  if (s == "Reasoning")
    return Protocol::Reasoning;
  return std::nullopt;
}

Protocol protocol_of(Category c) {
  switch (c) {
  case Category::Attributes:
  case Category::Material:
  case Category::PhysicalState:
  case Category::ObjectRetrieval:
  case Category::OCR:
    return Protocol::Perception;
  default:
    return Protocol::Reasoning;
  }
}

LetterSet BenchmarkSample::letters() const {
  LetterSet s;
  for (const auto& o : options)
    s.insert(o.letter);
  return s;
}

BenchmarkSample sample_from_json(const nlohmann::json& row) {
  if (!row.is_object())
    throw std::invalid_argument("sample must be a JSON object");
  BenchmarkSample s;
  s.id = string_field(row, "id");
  if (s.id.empty())
    throw std::invalid_argument("empty id");
  s.image_ref = string_field(row, "image");

  const auto& dims = field(row, "dims");
  if (!dims.is_object() || !dims.contains("width") || !dims.contains("height") ||
      !dims["width"].is_number_integer() || !dims["height"].is_number_integer())
    throw std::invalid_argument("dims must be {width, height} integers");
  s.dims = ImageDims(dims["width"].get<long>(), dims["height"].get<long>());

  const std::string cat = string_field(row, "category");
  auto category = parse_category(cat);
  if (!category)
    throw std::invalid_argument("unknown category '" + cat + "'");
  s.category = *category;
  s.protocol = protocol_of(s.category);
  if (row.contains("protocol")) {
    auto p = parse_protocol(string_field(row, "protocol"));
    if (!p)
      throw std::invalid_argument("protocol must be Perception or Reasoning");
    if (*p != s.protocol)
      throw std::invalid_argument("protocol " + std::string(to_string(*p)) +
                                  " inconsistent with category " + cat);
  }

  s.question = string_field(row, "question");

  const auto& options = field(row, "options");
  if (!options.is_array() || options.size() < 2 || options.size() > 6)
    throw std::invalid_argument("options must be an array of 2-6 entries");
  LetterSet seen;
  for (const auto& o : options) {
    if (!o.is_object())
      throw std::invalid_argument("option must be {letter, text}");
    auto letter = OptionLetter::from(string_field(o, "letter"));
    if (!letter)
      throw std::invalid_argument("option letter must be A-F");
    if (!seen.insert(*letter).second)
      throw std::invalid_argument("duplicate option letter " + letter->str());
    s.options.push_back({*letter, string_field(o, "text")});
  }

  auto answer = OptionLetter::from(string_field(row, "answer"));
  if (!answer)
    throw std::invalid_argument("answer must be a letter A-F");
  if (!seen.contains(*answer))
    throw std::invalid_argument("answer " + answer->str() + " is not among the options");
  s.answer = *answer;

  const auto& boxes = field(row, "target_boxes");
  if (!boxes.is_array() || boxes.empty())
    throw std::invalid_argument("target_boxes must be a nonempty array");
  for (const auto& b : boxes)
    s.target_boxes.push_back(box_from_json(b));
  return s;
}

nlohmann::json to_json(const BenchmarkSample& s) {
  nlohmann::json options = nlohmann::json::array();
  for (const auto& o : s.options)
    options.push_back({{"letter", o.letter.str()}, {"text", o.text}});
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : s.target_boxes)
    boxes.push_back({b.x1(), b.y1(), b.x2(), b.y2()});
  return {{"id", s.id},
          {"image", s.image_ref},
          {"dims", {{"width", s.dims.width}, {"height", s.dims.height}}},
          {"category", to_string(s.category)},
          {"protocol", to_string(s.protocol)},
          {"question", s.question},
          {"options", options},
          {"answer", s.answer.str()},
          {"target_boxes", boxes}};
}

std::vector<BenchmarkSample> load_dataset(const std::filesystem::path& path) {
  std::vector<BenchmarkSample> out;
  std::vector<std::string> problems;
  std::map<std::string, std::size_t> ids;
  for (const auto& [line_no, row] : read_jsonl(path)) {
    try {
      BenchmarkSample s = sample_from_json(row);
      if (auto [it, fresh] = ids.emplace(s.id, line_no); !fresh)
        throw std::invalid_argument("duplicate id '" + s.id + "' (first on line " +
                                    std::to_string(it->second) + ")");
      out.push_back(std::move(s));
    } catch (const std::invalid_argument& e) {
      problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
      if (problems.size() == 10)
        break;
    }
  }
  if (!problems.empty()) {
    std::string what = "schema violations in " + path.string() + ":";
    for (const auto& p : problems)
      what += "\n  " + p;
    throw DatasetError(what, problems);
  }
  return out;
}

ChatModelClient::ChatModelClient(std::shared_ptr<ChatTransport> transport, Options options)
    : transport_(std::move(transport)), options_(std::move(options)) {}

nlohmann::json ChatModelClient::build_request(const BenchmarkSample& sample,
                                              const std::string& prompt,
                                              std::uint64_t seed) const {
  nlohmann::json content = nlohmann::json::array();
  if (options_.attach_images) {
    std::string url;
    if (is_url(sample.image_ref)) {
      url = sample.image_ref;
    } else {
      const auto path = options_.image_root / sample.image_ref;
      url = "data:" + mime_for(path) + ";base64," + base64_encode(read_text(path));
    }
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
  }
  content.push_back({{"type", "text"}, {"text", prompt}});
  return {{"model", options_.model},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
          {"temperature", 0},
          {"max_tokens", options_.max_tokens},
          {"seed", seed & 0x7fffffffULL}};
}

std::string ChatModelClient::answer(const BenchmarkSample& sample, const std::string& prompt,
                                    std::uint64_t seed) {
  return message_text(transport_->complete(build_request(sample, prompt, seed)));
}

std::string render_prompt(const PromptTemplate& tpl, const BenchmarkSample& sample) {
  std::string options;
  for (const auto& o : sample.options) {
    if (!options.empty())
      options += '\n';
    options += "(" + o.letter.str() + ") " + o.text;
  }
  return tpl.render({{"question", sample.question},
                     {"options", options},
                     {"width", std::to_string(sample.dims.width)},
                     {"height", std::to_string(sample.dims.height)}});
}

nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : r.parsed.boxes)
    boxes.push_back({b.x1(), b.y1(), b.x2(), b.y2()});
  return {{"id", r.id},
          {"response", r.parsed.raw},
          {"choice", r.parsed.choice ? nlohmann::json(r.parsed.choice->str()) : nlohmann::json()},
          {"format_ok", r.parsed.format_ok},
          {"boxes", boxes},
          {"correct", r.correct},
          {"iou", r.question_iou},
          {"iou_recall", r.question_iou_recall},
          {"latency_s", r.latency_s},
          {"unanswered", r.unanswered},
          {"attempts", r.attempts}};
}

double question_iou(const ParsedResponse& parsed, std::span<const Box> gt_boxes) {
  if (parsed.boxes.empty() || gt_boxes.empty())
    return 0.0;
  return dual_iou_reward(parsed.boxes, gt_boxes).combined;
}

EvalRecord score_sample(const BenchmarkSample& sample, std::string response_text) {
  EvalRecord r;
  r.id = sample.id;
  r.parsed = parse_response(response_text, sample.letters());
  r.correct = r.parsed.choice && *r.parsed.choice == sample.answer;
  if (!r.parsed.boxes.empty()) {
    const DualIouResult d = dual_iou_reward(r.parsed.boxes, sample.target_boxes);
    r.question_iou = d.combined;
    r.question_iou_recall = d.recall;
  }
  return r;
}

EvalRecord record_from_json(const nlohmann::json& row, const BenchmarkSample& sample) {
  EvalRecord r = score_sample(sample, row.at("response").get<std::string>());
  r.unanswered = row.value("unanswered", false);
  if (r.unanswered) {
    r.correct = false;
    r.question_iou = 0.0;
    r.question_iou_recall = 0.0;
  }
  r.latency_s = row.value("latency_s", 0.0);
  r.attempts = row.value("attempts", 0);
  return r;
}

std::vector<EvalRecord> load_records(const std::filesystem::path& path,
                                     std::span<const BenchmarkSample> samples) {
  std::map<std::string_view, const BenchmarkSample*> by_id;
  for (const auto& s : samples)
    by_id[s.id] = &s;
  std::vector<EvalRecord> out;
  for (const auto& [line_no, row] : read_jsonl(path)) {
    const std::string id = row.value("id", "");
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": record for unknown sample '" + id + "'");
    out.push_back(record_from_json(row, *it->second));
  }
  return out;
}

std::vector<EvalRecord> evaluate(ModelClient& model, std::span<const BenchmarkSample> samples,
                                 const EvalOptions& options) {
  std::vector<EvalRecord> records(samples.size());
  parallel_for(samples.size(), options.max_parallel, [&](std::size_t i) {
    const BenchmarkSample& sample = samples[i];
    const std::string prompt = render_prompt(options.prompt, sample);
    const std::uint64_t seed = record_seed(options.seed, sample.id);
    const int max_attempts = std::max(1, options.max_attempts);

    std::optional<std::string> text;
    int attempts = 0;
    const auto start = std::chrono::steady_clock::now();
    while (!text && attempts < max_attempts) {
      ++attempts;
      try {
        text = model.answer(sample, prompt, seed);
      } catch (const CassetteMiss&) {
        break;
      } catch (const TransportError&) {
        if (attempts < max_attempts)
          std::this_thread::sleep_for(options.retry_backoff * attempts);
      }
    }
    const double latency =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    EvalRecord r;
    if (text) {
      r = score_sample(sample, std::move(*text));
    } else {
      r.id = sample.id;
      r.parsed = parse_response("", sample.letters());
      r.unanswered = true;
    }
    r.latency_s = latency;
    r.attempts = attempts;
    records[i] = std::move(r);
  });
  return records;
}

void add_verdicts(VerdictTable& table, std::span<const EvalRecord> records) {
  for (const auto& r : records)
    table[r.id].push_back(r.correct);
}

std::vector<BenchmarkSample> consensus_filter(std::span<const BenchmarkSample> samples,
                                              const VerdictTable& verdicts, std::size_t models) {
  std::vector<std::string> missing;
  for (const auto& s : samples) {
    auto it = verdicts.find(s.id);
    if (it == verdicts.end() || it->second.size() != models)
      missing.push_back(s.id);
  }
  if (!missing.empty()) {
    std::string what = "expected " + std::to_string(models) + " verdicts for samples:";
    for (const auto& id : missing)
      what += " " + id;
    throw MissingVerdicts(what, missing);
  }
  std::vector<BenchmarkSample> kept;
  for (const auto& s : samples) {
    const auto& v = verdicts.at(s.id);
    if (!std::all_of(v.begin(), v.end(), [](bool c) { return c; }))
      kept.push_back(s);
  }
  return kept;
}

} // namespace evidence

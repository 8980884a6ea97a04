#include "evidence/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "evidence/hashing.hpp"

namespace evidence {

namespace {

std::mt19937_64 rng_for(std::uint64_t seed, std::string_view salt, std::string_view id) {
  std::string key(salt);
  key.push_back('/');
  key.append(id);
  return std::mt19937_64(record_seed(seed, key));
}

double round_half_away(double v) { return std::round(v); }

ImageDims dims_from_json(const nlohmann::json& row) {
  if (row.contains("dims")) {
    const auto& d = row.at("dims");
    return ImageDims(d.at("width").get<long>(), d.at("height").get<long>());
  }
  return ImageDims(row.at("width").get<long>(), row.at("height").get<long>());
}

Box box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4)
    throw std::invalid_argument("box must be a 4-element array");
  return Box(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

nlohmann::json box_json(const Box& b) { return {b.x1(), b.y1(), b.x2(), b.y2()}; }

nlohmann::json dims_json(const ImageDims& d) {
  return {{"width", d.width}, {"height", d.height}};
}

nlohmann::json extra_fields(const nlohmann::json& row, std::initializer_list<const char*> known) {
  nlohmann::json extra = nlohmann::json::object();
  for (auto it = row.begin(); it != row.end(); ++it)
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }))
      extra[it.key()] = it.value();
  return extra;
}

} // namespace

NormalizedBox::NormalizedBox(double x1, double y1, double x2, double y2)
    : rx1(x1), ry1(y1), rx2(x2), ry2(y2) {
  if (!valid(x1, y1, x2, y2))
    throw GeometryError("invalid normalized box: need 0 <= r1 < r2 <= 1 on both axes");
}

bool NormalizedBox::valid(double x1, double y1, double x2, double y2) noexcept {
  auto axis = [](double lo, double hi) {
    return std::isfinite(lo) && std::isfinite(hi) && 0.0 <= lo && lo < hi && hi <= 1.0;
  };
  return axis(x1, x2) && axis(y1, y2);
}

Box denormalize(const NormalizedBox& b, const ImageDims& dims, Rounding rounding) {
  const double w = static_cast<double>(dims.width);
  const double h = static_cast<double>(dims.height);
  double x1 = w * b.rx1, y1 = h * b.ry1, x2 = w * b.rx2, y2 = h * b.ry2;
  if (rounding == Rounding::HalfAwayFromZero) {
    x1 = round_half_away(x1);
    y1 = round_half_away(y1);
    x2 = round_half_away(x2);
    y2 = round_half_away(y2);
  }
  return Box(x1, y1, x2, y2);
}

NormalizedBox normalize(const Box& b, const ImageDims& dims) {
  const double w = static_cast<double>(dims.width);
  const double h = static_cast<double>(dims.height);
  return NormalizedBox(b.x1() / w, b.y1() / h, b.x2() / w, b.y2() / h);
}

std::vector<Box> Trajectory::boxes() const {
  std::vector<Box> out;
  for (const auto& s : steps)
    if (const auto* b = std::get_if<Box>(&s))
      out.push_back(*b);
  return out;
}

std::size_t Trajectory::box_count() const {
  return static_cast<std::size_t>(std::count_if(
      steps.begin(), steps.end(), [](const ThinkPiece& s) { return std::holds_alternative<Box>(s); }));
}

std::string Trajectory::reasoning_text() const {
  std::string out;
  for (const auto& s : steps) {
    if (const auto* text = std::get_if<std::string>(&s))
      out += *text;
    else
      out += to_string(std::get<Box>(s));
  }
  return out;
}

Trajectory trajectory_from_json(const nlohmann::json& row) {
  Trajectory t;
  t.id = row.at("id").get<std::string>();
  t.image_ref = row.value("image", "");
  t.dims = dims_from_json(row);
  t.question = row.value("question", "");
  t.answer = row.value("answer", "");
  for (const auto& step : row.at("steps")) {
    if (step.contains("box"))
      t.steps.emplace_back(box_from_json(step.at("box")));
    else
      t.steps.emplace_back(step.at("text").get<std::string>());
  }
  t.extra = extra_fields(row, {"id", "image", "dims", "question", "steps", "answer"});
  return t;
}

nlohmann::json to_json(const Trajectory& t) {
  nlohmann::json row = t.extra;
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : t.steps) {
    if (const auto* text = std::get_if<std::string>(&s))
      steps.push_back({{"text", *text}});
    else
      steps.push_back({{"box", box_json(std::get<Box>(s))}});
  }
  row["id"] = t.id;
  row["image"] = t.image_ref;
  row["dims"] = dims_json(t.dims);
  row["question"] = t.question;
  row["steps"] = steps;
  row["answer"] = t.answer;
  return row;
}

Trajectory trajectory_from_normalized(const nlohmann::json& row, Rounding rounding) {
  Trajectory t;
  t.id = row.at("id").get<std::string>();
  t.image_ref = row.value("image", "");
  t.dims = dims_from_json(row);
  t.question = row.value("question", "");
  t.answer = row.value("answer", "");

  const std::string reasoning = row.at("reasoning").get<std::string>();
  std::size_t cursor = 0;
  for (const auto& m : scan_quadruples(reasoning)) {
    const auto& v = m.values;
    if (!NormalizedBox::valid(v[0], v[1], v[2], v[3]))
      throw std::invalid_argument("record " + t.id + ": quadruple at offset " +
                                  std::to_string(m.begin) + " is not a normalized box");
    if (m.begin > cursor)
      t.steps.emplace_back(reasoning.substr(cursor, m.begin - cursor));
    t.steps.emplace_back(denormalize(NormalizedBox(v[0], v[1], v[2], v[3]), t.dims, rounding));
    cursor = m.end;
  }
  if (cursor < reasoning.size())
    t.steps.emplace_back(reasoning.substr(cursor));
  t.extra = extra_fields(row, {"id", "image", "width", "height", "dims", "question", "reasoning",
                               "answer"});
  return t;
}

std::vector<Trajectory> filter_multibox(std::span<const Trajectory> trajectories) {
  std::vector<Trajectory> out;
  for (const auto& t : trajectories)
    if (t.box_count() >= 2)
      out.push_back(t);
  return out;
}

Trajectory inject_reflection(const Trajectory& t, std::uint64_t seed,
                             const ReflectionOptions& options) {
  const std::vector<Box> originals = t.boxes();
  if (originals.empty())
    throw std::invalid_argument("trajectory " + t.id + " has no boxes to perturb");

  auto rng = rng_for(seed, "reflect", t.id);
  const double W = static_cast<double>(t.dims.width);
  const double H = static_cast<double>(t.dims.height);
  std::uniform_real_distribution<double> frac(options.min_side_frac, options.max_side_frac);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::optional<Box> decoy;
  for (int attempt = 0; attempt < options.max_attempts && !decoy; ++attempt) {
    const double w = std::max(1.0, std::round(frac(rng) * W));
    const double h = std::max(1.0, std::round(frac(rng) * H));
    const double x1 = std::round(unit(rng) * std::max(0.0, W - w));
    const double y1 = std::round(unit(rng) * std::max(0.0, H - h));
    const Box candidate(x1, y1, x1 + w, y1 + h);
    if (std::all_of(originals.begin(), originals.end(),
                    [&](const Box& b) { return iou(candidate, b) <= options.iou_ceiling; }))
      decoy = candidate;
  }
  if (!decoy)
    throw DecoyPlacementError();

  // Decoy goes before the `slot`-th original box, or after the last one.
  const std::size_t slot =
      std::uniform_int_distribution<std::size_t>(0, originals.size())(rng);
  std::size_t insert_at = t.steps.size();
  std::size_t seen = 0;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    if (!std::holds_alternative<Box>(t.steps[i]))
      continue;
    if (seen == slot) {
      insert_at = i;
      break;
    }
    ++seen;
    if (seen == originals.size())
      insert_at = i + 1;
  }

  Trajectory out = t;
  const ThinkPiece marker = " " + std::string(kReflectionMarker) + ". ";
  out.steps.insert(out.steps.begin() + static_cast<std::ptrdiff_t>(insert_at), {*decoy, marker});
  return out;
}

bool selected_for_reflection(std::string_view id, std::uint64_t seed, double fraction) {
  auto rng = rng_for(seed, "select", id);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < fraction;
}

std::vector<nlohmann::json> filter_hard(std::span<const nlohmann::json> rows,
                                        const VerdictTable& verdicts, std::size_t k) {
  if (k == 0)
    throw std::invalid_argument("k must be at least 1");
  std::vector<std::string> missing;
  for (const auto& row : rows) {
    const std::string id = row.at("id").get<std::string>();
    auto it = verdicts.find(id);
    if (it == verdicts.end() || it->second.size() < k)
      missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string what = "fewer than " + std::to_string(k) + " verdicts for:";
    for (const auto& id : missing)
      what += " " + id;
    throw MissingVerdicts(what, missing);
  }
  std::vector<nlohmann::json> kept;
  for (const auto& row : rows) {
    const auto& v = verdicts.at(row.at("id").get<std::string>());
    if (std::none_of(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), [](bool c) { return c; }))
      kept.push_back(row);
  }
  return kept;
}

CountingAnnotation counting_annotation_from_json(const nlohmann::json& row) {
  CountingAnnotation a;
  a.id = row.at("id").get<std::string>();
  a.image_ref = row.value("image", "");
  a.dims = dims_from_json(row);
  for (const auto& obj : row.at("objects"))
    a.objects[obj.at("category").get<std::string>()].push_back(box_from_json(obj.at("box")));
  return a;
}

CountingAnnotation parse_visdrone_annotation(std::string_view text, std::string id,
                                             std::string image_ref, ImageDims dims) {
  static const std::map<int, std::string> kNames{
      {1, "pedestrian"}, {2, "people"},    {3, "bicycle"},          {4, "car"},
      {5, "van"},        {6, "truck"},     {7, "tricycle"},         {8, "awning-tricycle"},
      {9, "bus"},        {10, "motor"},
  };
  CountingAnnotation a{std::move(id), std::move(image_ref), dims, {}};
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    double left = 0, top = 0, w = 0, h = 0;
    int score = 0, category = 0;
    if (!(fields >> left >> top >> w >> h >> score >> category))
      throw std::invalid_argument("visdrone annotation line " + std::to_string(line_no) +
                                  " is malformed");
    auto name = kNames.find(category);
    if (score == 0 || name == kNames.end() || w <= 0 || h <= 0)
      continue;
    a.objects[name->second].emplace_back(left, top, left + w, top + h);
  }
  return a;
}

nlohmann::json to_json(const CountingSample& s) {
  nlohmann::json options = nlohmann::json::array();
  for (std::size_t i = 0; i < s.options.size(); ++i)
    options.push_back({{"letter", std::string(1, static_cast<char>('A' + i))},
                       {"text", std::to_string(s.options[i])}});
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : s.gt_boxes)
    boxes.push_back(box_json(b));
  return {{"id", s.id},
          {"image", s.image_ref},
          {"dims", dims_json(s.dims)},
          {"task", "counting"},
          {"object_category", s.category},
          {"question", s.question},
          {"options", options},
          {"answer", s.answer.str()},
          {"gt_count", s.gt_count},
          {"target_boxes", boxes}};
}

std::optional<CountingSample> make_counting_mcq(const CountingAnnotation& a, std::uint64_t seed) {
  std::vector<const std::pair<const std::string, BoxSet>*> qualifying;
  for (const auto& entry : a.objects) {
    const long n = static_cast<long>(entry.second.size());
    if (n >= kMinCount && n <= kMaxCount)
      qualifying.push_back(&entry);
  }
  if (qualifying.empty())
    return std::nullopt;

  auto rng = rng_for(seed, "counting", a.id);
  const auto& [category, boxes] =
      *qualifying[std::uniform_int_distribution<std::size_t>(0, qualifying.size() - 1)(rng)];

  CountingSample s;
  s.id = a.id;
  s.image_ref = a.image_ref;
  s.dims = a.dims;
  s.category = category;
  s.question = "How many " + category + " are in the image?";
  s.gt_count = static_cast<long>(boxes.size());
  s.gt_boxes = boxes;

  std::vector<long> distractors;
  for (long d : {-3L, -2L, -1L, 1L, 2L, 3L})
    if (s.gt_count + d >= 0)
      distractors.push_back(s.gt_count + d);
  std::shuffle(distractors.begin(), distractors.end(), rng);
  s.options = {s.gt_count, distractors[0], distractors[1], distractors[2]};
  std::shuffle(s.options.begin(), s.options.end(), rng);
  const auto pos = std::find(s.options.begin(), s.options.end(), s.gt_count) - s.options.begin();
  s.answer = OptionLetter(static_cast<char>('A' + pos));
  return s;
}

} // namespace evidence

#include "evidence/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "evidence/numfmt.hpp"

namespace evidence {

namespace {

constexpr const char* kIouDefinition =
    "question IoU = (recall + precision) / 2 over extracted vs. target boxes, 0 without boxes; "
    "mIoU = mean over all questions";

double pct(long num, long den) { return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / den; }

void finish(GroupStats& g, double iou_sum) {
  g.accuracy = pct(g.correct, g.total);
  g.miou = g.total == 0 ? 0.0 : iou_sum / static_cast<double>(g.total);
}

// Mann-Whitney U / (n1 n2)
std::optional<double> auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty())
    return std::nullopt;
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg)
      wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double mean(const std::vector<double>& v) {
  if (v.empty())
    return 0.0;
  double s = 0.0;
  for (double x : v)
    s += x;
  return s / static_cast<double>(v.size());
}

nlohmann::json group_json(const GroupStats& g) {
  return {{"name", g.name},
          {"total", g.total},
          {"correct", g.correct},
          {"accuracy", g.accuracy},
          {"miou", g.miou}};
}

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos)
    return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"')
      out += '"';
    out += c;
  }
  return out + "\"";
}

} // namespace

void Histogram::add(double v) {
  int bin = static_cast<int>(std::floor(v / kBinWidth));
  counts[static_cast<size_t>(std::clamp(bin, 0, kBins - 1))] += 1;
}

long Histogram::total() const {
  long t = 0;
  for (long c : counts)
    t += c;
  return t;
}

EvalReport build_report(std::span<const EvalRecord> records,
                        std::span<const BenchmarkSample> samples, ReportMeta meta) {
  if (records.empty())
    throw std::invalid_argument("no records to report");

  std::map<std::string_view, const EvalRecord*> by_id;
  for (const auto& r : records)
    if (!by_id.emplace(r.id, &r).second)
      throw std::invalid_argument("duplicate record for sample '" + r.id + "'");
  if (records.size() != samples.size())
    throw std::invalid_argument("have " + std::to_string(records.size()) + " records for " +
                                std::to_string(samples.size()) + " samples");

  EvalReport rep;
  rep.meta = std::move(meta);
  rep.iou_definition = kIouDefinition;

  std::map<Category, GroupStats> cats;
  std::map<Category, double> cat_iou;
  for (Category c : kAllCategories)
    cats[c].name = std::string(to_string(c));
  GroupStats perception{"Perception"}, reasoning{"Reasoning"};
  double perception_iou = 0.0, reasoning_iou = 0.0;
  double iou_sum = 0.0, recall_sum = 0.0, area_sum = 0.0;
  std::vector<double> iou_correct, iou_wrong;

  for (const char* key : {"all", "correct", "wrong", "perception", "reasoning",
                          "perception_correct", "perception_wrong", "reasoning_correct",
                          "reasoning_wrong"})
    rep.iou_histograms[key];

  for (const auto& s : samples) {
    auto it = by_id.find(s.id);
    if (it == by_id.end())
      throw std::invalid_argument("no record for sample '" + s.id + "'");
    const EvalRecord& r = *it->second;
    const bool ok = r.correct && !r.unanswered;
    const double q = r.unanswered ? 0.0 : r.question_iou;

    ++rep.total;
    rep.correct += ok;
    rep.unanswered += r.unanswered;
    iou_sum += q;
    recall_sum += r.unanswered ? 0.0 : r.question_iou_recall;

    GroupStats& g = cats[s.category];
    ++g.total;
    g.correct += ok;
    cat_iou[s.category] += q;

    const bool perc = s.protocol == Protocol::Perception;
    GroupStats& p = perc ? perception : reasoning;
    ++p.total;
    p.correct += ok;
    (perc ? perception_iou : reasoning_iou) += q;

    const std::string proto = perc ? "perception" : "reasoning";
    rep.iou_histograms["all"].add(q);
    rep.iou_histograms[ok ? "correct" : "wrong"].add(q);
    rep.iou_histograms[proto].add(q);
    rep.iou_histograms[proto + (ok ? "_correct" : "_wrong")].add(q);
    (ok ? iou_correct : iou_wrong).push_back(q);

    rep.answer_letters[s.answer.str()] += 1;
    rep.instances_per_question[static_cast<long>(s.target_boxes.size())] += 1;
    double area = 0.0;
    for (const auto& b : s.target_boxes)
      area += relative_area(b, s.dims);
    area /= static_cast<double>(s.target_boxes.size());
    rep.area_histogram.add(area);
    area_sum += area;
  }

  const double n = static_cast<double>(rep.total);
  rep.accuracy = pct(rep.correct, rep.total);
  rep.miou = iou_sum / n;
  rep.miou_recall = recall_sum / n;
  rep.mean_area = area_sum / n;
  for (Category c : kAllCategories) {
    finish(cats[c], cat_iou[c]);
    rep.per_category.push_back(cats[c]);
  }
  finish(perception, perception_iou);
  finish(reasoning, reasoning_iou);
  rep.per_protocol = {perception, reasoning};
  rep.iou_correct_auc = auc(iou_correct, iou_wrong);
  rep.mean_iou_correct = mean(iou_correct);
  rep.mean_iou_wrong = mean(iou_wrong);
  return rep;
}

std::string render_json(const EvalReport& r) {
  nlohmann::json j;
  j["meta"] = {{"model", r.meta.model_id},
               {"prompt_template", r.meta.prompt_name},
               {"prompt_sha256", r.meta.prompt_hash},
               {"seed", r.meta.seed},
               {"iou_definition", r.iou_definition}};
  j["overall"] = {{"total", r.total},
                  {"correct", r.correct},
                  {"unanswered", r.unanswered},
                  {"accuracy", r.accuracy},
                  {"miou", r.miou},
                  {"miou_recall_only", r.miou_recall}};
  j["per_category"] = nlohmann::json::array();
  for (const auto& g : r.per_category)
    j["per_category"].push_back(group_json(g));
  j["per_protocol"] = nlohmann::json::array();
  for (const auto& g : r.per_protocol)
    j["per_protocol"].push_back(group_json(g));
  for (const auto& [name, h] : r.iou_histograms)
    j["iou_histograms"][name] = h.counts;
  j["iou_vs_correctness"] = {
      {"auc", r.iou_correct_auc ? nlohmann::json(*r.iou_correct_auc) : nlohmann::json()},
      {"mean_iou_correct", r.mean_iou_correct},
      {"mean_iou_wrong", r.mean_iou_wrong}};
  j["distribution"]["answer_letters"] = r.answer_letters;
  for (const auto& [k, v] : r.instances_per_question)
    j["distribution"]["instances_per_question"][std::to_string(k)] = v;
  j["distribution"]["relative_area_histogram"] = r.area_histogram.counts;
  j["distribution"]["mean_relative_area"] = r.mean_area;
  j["histogram_bin_width"] = Histogram::kBinWidth;
  return j.dump(2) + "\n";
}

std::string render_category_csv(const EvalReport& r) {
  std::string out = "group,kind,total,correct,accuracy,miou\n";
  auto row = [&](const GroupStats& g, const char* kind) {
    out += csv_field(g.name) + "," + kind + "," + std::to_string(g.total) + "," +
           std::to_string(g.correct) + "," + format_number(g.accuracy) + "," +
           format_number(g.miou) + "\n";
  };
  for (const auto& g : r.per_category)
    row(g, "category");
  for (const auto& g : r.per_protocol)
    row(g, "protocol");
  row(GroupStats{"Overall", r.total, r.correct, r.accuracy, r.miou}, "overall");
  return out;
}

std::string render_markdown(const EvalReport& r) {
  std::string out = "# Evaluation report\n\n";
  out += "- model: `" + r.meta.model_id + "`\n";
  out += "- prompt template: `" + r.meta.prompt_name + "` (sha256 `" + r.meta.prompt_hash + "`)\n";
  out += "- seed: " + std::to_string(r.meta.seed) + "\n";
  out += "- IoU definition: " + r.iou_definition + "\n\n";
  out += "| Overall | mIoU | mIoU (recall only) | Questions | Unanswered |\n";
  out += "|---|---|---|---|---|\n";
  out += "| " + fixed(r.accuracy, 1) + " | " + fixed(100.0 * r.miou, 1) + " | " +
         fixed(100.0 * r.miou_recall, 1) + " | " + std::to_string(r.total) + " | " +
         std::to_string(r.unanswered) + " |\n\n";
  out += "| Group | Questions | Accuracy | mIoU |\n|---|---|---|---|\n";
  for (const auto* groups : {&r.per_protocol, &r.per_category})
    for (const auto& g : *groups)
      out += "| " + g.name + " | " + std::to_string(g.total) + " | " + fixed(g.accuracy, 1) +
             " | " + fixed(100.0 * g.miou, 1) + " |\n";
  out += "\nMean IoU of correct answers " + fixed(r.mean_iou_correct, 4) + ", of wrong answers " +
         fixed(r.mean_iou_wrong, 4);
  if (r.iou_correct_auc)
    out += "; P(IoU correct > IoU wrong) = " + fixed(*r.iou_correct_auc, 4);
  out += ".\n\nMean relative target area " + fixed(r.mean_area, 4) + ".\n";
  return out;
}

std::string render_histogram_csv(const EvalReport& r) {
  std::string out = "histogram,bin_lo,bin_hi,count\n";
  auto emit = [&](const std::string& name, const Histogram& h) {
    for (int b = 0; b < Histogram::kBins; ++b)
      out += name + "," + format_number(b * Histogram::kBinWidth) + "," +
             format_number((b + 1) * Histogram::kBinWidth) + "," +
             std::to_string(h.counts[static_cast<size_t>(b)]) + "\n";
  };
  for (const auto& [name, h] : r.iou_histograms)
    emit("iou_" + name, h);
  emit("relative_area", r.area_histogram);
  return out;
}

} // namespace evidence

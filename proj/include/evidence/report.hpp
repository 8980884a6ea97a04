#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "evidence/harness.hpp"

namespace evidence {

/// Fixed-width histogram over [0, 1]; the value 1.0 lands in the last bin.
/// Values outside the range are clamped into the end bins.
struct Histogram {
  static constexpr double kBinWidth = 0.05;
  static constexpr int kBins = 20;

  std::vector<long> counts = std::vector<long>(kBins, 0);

  void add(double v);
  long total() const;
};

struct GroupStats {
  std::string name;
  long total = 0;
  long correct = 0;
  double accuracy = 0.0; ///< percent
  double miou = 0.0;     ///< mean dual question IoU, in [0, 1]
};

/// Provenance recorded in the report header.
struct ReportMeta {
  std::string model_id;
  std::string prompt_name;
  std::string prompt_hash;
  std::uint64_t seed = 0;
};

struct EvalReport {
  ReportMeta meta;
  std::string iou_definition;

  long total = 0;
  long correct = 0;
  long unanswered = 0;
  double accuracy = 0.0;   ///< percent
  double miou = 0.0;       ///< headline: dual IoU per question, averaged
  double miou_recall = 0.0;

  std::vector<GroupStats> per_category; ///< all ten categories, fixed order
  std::vector<GroupStats> per_protocol; ///< Perception, Reasoning

  /// Keys: all, correct, wrong, perception, reasoning, perception_correct,
  /// perception_wrong, reasoning_correct, reasoning_wrong.
  std::map<std::string, Histogram> iou_histograms;

  /// Probability that a correct answer has higher question IoU than a wrong
  /// one (ties count half); 0.5 means no association. Absent when either
  /// group is empty.
  std::optional<double> iou_correct_auc;
  double mean_iou_correct = 0.0;
  double mean_iou_wrong = 0.0;

  std::map<std::string, long> answer_letters;    ///< ground-truth letter counts
  std::map<long, long> instances_per_question;   ///< target count -> questions
  Histogram area_histogram;                      ///< per-question mean relative area
  double mean_area = 0.0;
};

/// Builds the report. Records are matched to samples by id and must cover
/// every sample exactly once; throws std::invalid_argument otherwise or when
/// there are no records.
EvalReport build_report(std::span<const EvalRecord> records,
                        std::span<const BenchmarkSample> samples, ReportMeta meta = {});

std::string render_json(const EvalReport& r);
std::string render_category_csv(const EvalReport& r);
std::string render_markdown(const EvalReport& r);
/// One row per (histogram, bin): plot-ready.
std::string render_histogram_csv(const EvalReport& r);

} // namespace evidence

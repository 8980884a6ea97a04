#include "evidence/rewards.hpp"

#include <algorithm>
#include <cmath>

#include "evidence/judge.hpp"
#include "evidence/parallel.hpp"

namespace evidence {

GroundTruth GroundTruth::multiple_choice(OptionLetter answer, BoxSet boxes, LetterSet allowed) {
  if (!allowed.contains(answer))
    throw std::invalid_argument("answer " + answer.str() + " is not an allowed option");
  GroundTruth gt;
  gt.kind = AnswerKind::MultipleChoice;
  gt.answer = answer.str();
  gt.target_boxes = std::move(boxes);
  gt.allowed = std::move(allowed);
  return gt;
}

GroundTruth GroundTruth::open_ended(std::string answer, BoxSet boxes, std::string question) {
  GroundTruth gt;
  gt.kind = AnswerKind::OpenEnded;
  gt.answer = std::move(answer);
  gt.target_boxes = std::move(boxes);
  gt.question = std::move(question);
  return gt;
}

double accuracy_reward(const ParsedResponse& parsed, const GroundTruth& gt, JudgeClient* judge,
                       RewardDiagnostics* diag) {
  if (gt.kind == AnswerKind::MultipleChoice)
    return parsed.choice && parsed.choice->str() == gt.answer ? 1.0 : 0.0;

  if (judge == nullptr)
    throw JudgeRequired();
  const std::string prediction = parsed.answer ? *parsed.answer : parsed.raw;
  const JudgeVerdict v = judge->judge({gt.question, gt.answer, prediction});
  if (diag) {
    diag->judged = true;
    diag->judge_nonconforming = !v.conforming;
  }
  return v.conforming && v.correct ? 1.0 : 0.0;
}

double format_reward(const ParsedResponse& parsed) noexcept { return parsed.format_ok ? 1.0 : 0.0; }

RewardBreakdown total_reward(const ParsedResponse& parsed, const GroundTruth& gt,
                             JudgeClient* judge, RewardDiagnostics* diag) {
  RewardBreakdown r;
  r.acc = accuracy_reward(parsed, gt, judge, diag);
  r.format = format_reward(parsed);
  if (gt.has_boxes()) {
    const DualIouResult d = dual_iou_reward(parsed.boxes, gt.target_boxes);
    r.iou_recall = d.recall;
    r.iou_precision = d.precision;
    r.iou = d.combined;
  }
  r.total = r.acc + r.format + r.iou;
  return r;
}

std::vector<double> compute_advantages(std::span<const double> rewards, double epsilon) {
  if (rewards.size() < 2)
    throw std::invalid_argument("group too small");
  std::vector<double> adv(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; }))
    return adv;

  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards)
    mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards)
    var += (r - mean) * (r - mean);
  const double denom = std::sqrt(var / n) + epsilon;
  for (size_t i = 0; i < rewards.size(); ++i)
    adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

void compute_advantages(RolloutGroup& group, double epsilon) {
  std::vector<double> totals;
  totals.reserve(group.rewards.size());
  for (const auto& r : group.rewards)
    totals.push_back(r.total);
  group.advantages = compute_advantages(totals, epsilon);
}

std::vector<ScoredItem> score_batch(std::span<const ScoreItem> items, JudgeClient* judge,
                                    std::size_t max_in_flight) {
  std::vector<ScoredItem> out(items.size());
  auto score_one = [&](std::size_t i) {
    const ScoreItem& item = items[i];
    ScoredItem& s = out[i];
    s.parsed = parse_response(item.response_text, item.ground_truth.allowed);
    s.reward = total_reward(s.parsed, item.ground_truth, judge, &s.diagnostics);
  };

  const bool needs_judge =
      std::any_of(items.begin(), items.end(),
                  [](const ScoreItem& it) { return it.ground_truth.kind == AnswerKind::OpenEnded; });
  // MCQ-only batches are CPU-bound; a single thread avoids pool overhead
  parallel_for(items.size(), needs_judge && judge ? max_in_flight : 1, score_one);
  return out;
}

} // namespace evidence

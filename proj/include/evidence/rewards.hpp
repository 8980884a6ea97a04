#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "evidence/geometry.hpp"
#include "evidence/response_parser.hpp"

namespace evidence {

inline constexpr std::string_view kRewardFormulaVersion = "reward/1";
inline constexpr double kAdvantageEpsilon = 1e-6;

class JudgeClient;

enum class AnswerKind { MultipleChoice, OpenEnded };

/// What a response is scored against.
struct GroundTruth {
  AnswerKind kind = AnswerKind::MultipleChoice;
  std::string answer; ///< option letter for MCQ, canonical text otherwise
  BoxSet target_boxes;
  LetterSet allowed = all_letters();
  std::string question; ///< shown to the judge for open-ended answers

  /// Throws std::invalid_argument when `answer` is not in `allowed`.
  static GroundTruth multiple_choice(OptionLetter answer, BoxSet boxes,
                                     LetterSet allowed = all_letters());
  static GroundTruth open_ended(std::string answer, BoxSet boxes, std::string question = {});

  bool has_boxes() const noexcept { return !target_boxes.empty(); }
};

struct RewardBreakdown {
  double acc = 0.0;
  double format = 0.0;
  double iou_recall = 0.0;
  double iou_precision = 0.0;
  double iou = 0.0;
  double total = 0.0;

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

struct RewardDiagnostics {
  bool judged = false;
  /// Judge replied with something other than a one-word verdict (scored 0).
  bool judge_nonconforming = false;
};

/// An open-ended answer was scored without a judge.
class JudgeRequired : public std::runtime_error {
public:
  JudgeRequired() : std::runtime_error("judge required") {}
};

/// Exact letter match for MCQ; judge verdict for open-ended answers.
/// Judge transport failures propagate as JudgeUnavailable.
double accuracy_reward(const ParsedResponse& parsed, const GroundTruth& gt, JudgeClient* judge,
                       RewardDiagnostics* diag = nullptr);

double format_reward(const ParsedResponse& parsed) noexcept;

/// acc + format + dual IoU. The IoU terms are zero when `gt` carries no boxes.
RewardBreakdown total_reward(const ParsedResponse& parsed, const GroundTruth& gt,
                             JudgeClient* judge, RewardDiagnostics* diag = nullptr);

/// Group-relative advantages: (r - mean) / (population std + epsilon).
/// A constant group maps to all zeros. Throws std::invalid_argument for
/// fewer than two rewards.
std::vector<double> compute_advantages(std::span<const double> rewards,
                                       double epsilon = kAdvantageEpsilon);

struct RolloutGroup {
  std::vector<ParsedResponse> responses;
  std::vector<RewardBreakdown> rewards;
  std::vector<double> advantages;
};

/// Fills group.advantages from the breakdown totals.
void compute_advantages(RolloutGroup& group, double epsilon = kAdvantageEpsilon);

struct ScoreItem {
  std::string response_text;
  GroundTruth ground_truth;
};

struct ScoredItem {
  ParsedResponse parsed;
  RewardBreakdown reward;
  RewardDiagnostics diagnostics;
};

/// Scores every item, issuing at most `max_in_flight` judge calls at a time.
/// Results are in input order and independent of scheduling. Any failure
/// fails the whole batch (the lowest failing index is reported).
std::vector<ScoredItem> score_batch(std::span<const ScoreItem> items, JudgeClient* judge,
                                    std::size_t max_in_flight = 8);

} // namespace evidence

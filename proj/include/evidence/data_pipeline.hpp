#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evidence/geometry.hpp"
#include "evidence/harness.hpp"
#include "evidence/response_parser.hpp"

namespace evidence {

inline constexpr std::string_view kReflectionMarker = "Wait, this box seems to be wrong";

/// Box in image-relative coordinates, 0 <= r_x1 < r_x2 <= 1 (same for y).
struct NormalizedBox {
  NormalizedBox(double rx1, double ry1, double rx2, double ry2);
  static bool valid(double rx1, double ry1, double rx2, double ry2) noexcept;

  double rx1, ry1, rx2, ry2;
};

enum class Rounding { None, HalfAwayFromZero };

/// [W*rx1, H*ry1, W*rx2, H*ry2]. With rounding, a box that collapses to zero
/// width or height throws GeometryError.
Box denormalize(const NormalizedBox& b, const ImageDims& dims, Rounding rounding = Rounding::None);

/// Inverse of denormalize; throws GeometryError if `b` leaves the image.
NormalizedBox normalize(const Box& b, const ImageDims& dims);

/// Reasoning trace: text interleaved with absolute-coordinate boxes.
struct Trajectory {
  std::string id;
  std::string image_ref;
  ImageDims dims{1, 1};
  std::string question;
  std::vector<ThinkPiece> steps;
  std::string answer;
  nlohmann::json extra = nlohmann::json::object(); ///< unknown input fields, passed through

  std::vector<Box> boxes() const;
  std::size_t box_count() const;
  /// Steps flattened to text, boxes rendered as "[x1, y1, x2, y2]".
  std::string reasoning_text() const;
};

/// Trajectory line schema:
///   {"id", "image", "dims": {"width", "height"}, "question",
///    "steps": [{"text": "..."} | {"box": [x1, y1, x2, y2]}], "answer", ...}
Trajectory trajectory_from_json(const nlohmann::json& row);
nlohmann::json to_json(const Trajectory& t);

/// Adapter for normalized-coordinate trajectory records:
///   {"id", "image", "width", "height", "question", "reasoning", "answer", ...}
/// where "reasoning" carries "[rx1, ry1, rx2, ry2]" quadruples in [0, 1].
/// Every quadruple is converted to absolute pixels; a quadruple that is not a
/// valid normalized box throws std::invalid_argument.
Trajectory trajectory_from_normalized(const nlohmann::json& row,
                                      Rounding rounding = Rounding::None);

/// Keeps trajectories with at least two boxes, order preserved.
std::vector<Trajectory> filter_multibox(std::span<const Trajectory> trajectories);

struct ReflectionOptions {
  double iou_ceiling = 0.1;
  int max_attempts = 1000;
  double min_side_frac = 0.02;
  double max_side_frac = 0.20;
};

class DecoyPlacementError : public std::runtime_error {
public:
  DecoyPlacementError() : std::runtime_error("cannot place decoy") {}
};

/// Inserts one random decoy box, IoU <= iou_ceiling against every original
/// box, at a random position among the existing boxes, followed immediately
/// by the reflection marker. Randomness is derived from (seed, t.id).
/// Throws std::invalid_argument for a box-less trajectory and
/// DecoyPlacementError when rejection sampling runs out of attempts.
Trajectory inject_reflection(const Trajectory& t, std::uint64_t seed,
                             const ReflectionOptions& options = {});

/// Deterministic per-record selection with probability `fraction`.
bool selected_for_reflection(std::string_view id, std::uint64_t seed, double fraction);

/// Keeps rows (each with a string "id") whose first k verdicts are all wrong.
/// Throws MissingVerdicts listing ids with fewer than k verdicts.
std::vector<nlohmann::json> filter_hard(std::span<const nlohmann::json> rows,
                                        const VerdictTable& verdicts, std::size_t k = 1);

/// Objects of one image grouped by category.
struct CountingAnnotation {
  std::string id;
  std::string image_ref;
  ImageDims dims{1, 1};
  std::map<std::string, BoxSet> objects;
};

/// {"id", "image", "dims": {...}, "objects": [{"category", "box"}]}
CountingAnnotation counting_annotation_from_json(const nlohmann::json& row);

/// Parses a VisDrone-DET annotation file body
/// ("left,top,width,height,score,category,truncation,occlusion" per line).
/// Ignored regions (category 0 or score 0) and "others" (11) are dropped.
CountingAnnotation parse_visdrone_annotation(std::string_view text, std::string id,
                                             std::string image_ref, ImageDims dims);

struct CountingSample {
  std::string id;
  std::string image_ref;
  ImageDims dims{1, 1};
  std::string category;
  std::string question;
  long gt_count = 0;
  std::vector<long> options; ///< four distinct counts, lettered A-D
  OptionLetter answer{'A'};
  BoxSet gt_boxes;
};

nlohmann::json to_json(const CountingSample& s);

inline constexpr long kMinCount = 5;
inline constexpr long kMaxCount = 10;

/// Picks a category with 5-10 instances and builds a four-way counting
/// question: the true count plus three distinct distractors drawn from
/// count +/- {1, 2, 3}, shuffled. Returns nullopt when no category
/// qualifies.
std::optional<CountingSample> make_counting_mcq(const CountingAnnotation& a, std::uint64_t seed);

} // namespace evidence

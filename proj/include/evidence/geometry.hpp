#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace evidence {

class GeometryError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Axis-aligned rectangle in absolute pixel coordinates.
///
/// A Box always has finite coordinates and strictly positive area;
/// the constructor throws GeometryError otherwise. Coordinates are not
/// clipped to any image bounds.
class Box {
public:
  Box(double x1, double y1, double x2, double y2);

  /// Non-throwing validity check for the same rule the constructor enforces.
  static bool valid(double x1, double y1, double x2, double y2) noexcept;

  double x1() const noexcept { return x1_; }
  double y1() const noexcept { return y1_; }
  double x2() const noexcept { return x2_; }
  double y2() const noexcept { return y2_; }

  double width() const noexcept { return x2_ - x1_; }
  double height() const noexcept { return y2_ - y1_; }
  double area() const noexcept { return width() * height(); }

  friend bool operator==(const Box&, const Box&) = default;

private:
  double x1_, y1_, x2_, y2_;
};

std::string to_string(const Box& b);

struct ImageDims {
  ImageDims(long width, long height);

  long width;
  long height;

  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

using BoxSet = std::vector<Box>;

double intersection_area(const Box& a, const Box& b) noexcept;

/// Intersection over union, in [0, 1], symmetric.
double iou(const Box& a, const Box& b) noexcept;

/// Best IoU of `b` against any member of `set`; 0 for an empty set.
double max_iou_against(std::span<const Box> set, const Box& b) noexcept;

struct DualIouResult {
  double recall = 0.0;
  double precision = 0.0;
  double combined = 0.0;

  friend bool operator==(const DualIouResult&, const DualIouResult&) = default;
};

/// Recall averages, over ground truths, the best IoU any prediction achieves;
/// precision averages, over predictions, the best IoU any ground truth
/// achieves. Combined is their mean. An empty prediction set scores zero on
/// every term. Throws GeometryError("no ground truth") when `gts` is empty.
DualIouResult dual_iou_reward(std::span<const Box> preds, std::span<const Box> gts);

/// Box area as a fraction of the image area. No clipping, so boxes that
/// overhang the image can exceed 1.
double relative_area(const Box& b, const ImageDims& dims) noexcept;

} // namespace evidence

#include "evidence/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "evidence/numfmt.hpp"

namespace evidence {

bool Box::valid(double x1, double y1, double x2, double y2) noexcept {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x1 < x2 && y1 < y2;
}

Box::Box(double x1, double y1, double x2, double y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!valid(x1, y1, x2, y2))
    throw GeometryError("invalid box " + to_string(*this) +
                        ": need finite coordinates with x1 < x2 and y1 < y2");
}

std::string to_string(const Box& b) {
  return "[" + format_number(b.x1()) + ", " + format_number(b.y1()) + ", " +
         format_number(b.x2()) + ", " + format_number(b.y2()) + "]";
}

ImageDims::ImageDims(long w, long h) : width(w), height(h) {
  if (w < 1 || h < 1)
    throw GeometryError("image dimensions must be positive, got " + std::to_string(w) + "x" +
                        std::to_string(h));
}

double intersection_area(const Box& a, const Box& b) noexcept {
  const double w = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
  const double h = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
  return w * h;
}

double iou(const Box& a, const Box& b) noexcept {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0)
    return 0.0;
  const double uni = a.area() + b.area() - inter;
  // union >= max(area) > 0; clamp guards rounding when a == b
  return std::clamp(inter / uni, 0.0, 1.0);
}

double max_iou_against(std::span<const Box> set, const Box& b) noexcept {
  double best = 0.0;
  for (const Box& m : set)
    best = std::max(best, iou(m, b));
  return best;
}

DualIouResult dual_iou_reward(std::span<const Box> preds, std::span<const Box> gts) {
  if (gts.empty())
    throw GeometryError("no ground truth");
  DualIouResult r;
  if (preds.empty())
    return r;

  // Wider accumulator: the mean of n equal terms comes back exactly, so
  // removing a prediction that scores the same as the rest leaves precision
  // bit-identical.
  long double recall_sum = 0.0L;
  for (const Box& g : gts)
    recall_sum += max_iou_against(preds, g);
  long double precision_sum = 0.0L;
  for (const Box& p : preds)
    precision_sum += max_iou_against(gts, p);

  r.recall = static_cast<double>(recall_sum / static_cast<long double>(gts.size()));
  r.precision = static_cast<double>(precision_sum / static_cast<long double>(preds.size()));
  r.combined = (r.recall + r.precision) / 2.0;
  return r;
}

double relative_area(const Box& b, const ImageDims& dims) noexcept {
  return b.area() / (static_cast<double>(dims.width) * static_cast<double>(dims.height));
}

} // namespace evidence

#pragma once

// Test-only reference computations, independent of the library's formulas.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace oracle {

using IntBox = std::array<int, 4>; // x1, y1, x2, y2 on the integer grid

/// IoU by counting unit grid cells covered by each box.
inline double raster_iou(const IntBox& a, const IntBox& b) {
  const int lo_x = std::min(a[0], b[0]), hi_x = std::max(a[2], b[2]);
  const int lo_y = std::min(a[1], b[1]), hi_y = std::max(a[3], b[3]);
  long inter = 0, uni = 0;
  for (int x = lo_x; x < hi_x; ++x)
    for (int y = lo_y; y < hi_y; ++y) {
      const bool in_a = x >= a[0] && x + 1 <= a[2] && y >= a[1] && y + 1 <= a[3];
      const bool in_b = x >= b[0] && x + 1 <= b[2] && y >= b[1] && y + 1 <= b[3];
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct Dual {
  double recall, precision, combined;
};

/// Dual IoU by brute force over every prediction/ground-truth pair.
inline Dual raster_dual(const std::vector<IntBox>& preds, const std::vector<IntBox>& gts) {
  if (preds.empty())
    return {0, 0, 0};
  std::vector<std::vector<double>> m(preds.size(), std::vector<double>(gts.size()));
  for (size_t i = 0; i < preds.size(); ++i)
    for (size_t k = 0; k < gts.size(); ++k)
      m[i][k] = raster_iou(preds[i], gts[k]);
  double r = 0, p = 0;
  for (size_t k = 0; k < gts.size(); ++k) {
    double best = 0;
    for (size_t i = 0; i < preds.size(); ++i)
      best = std::max(best, m[i][k]);
    r += best;
  }
  for (size_t i = 0; i < preds.size(); ++i)
    p += *std::max_element(m[i].begin(), m[i].end());
  r /= static_cast<double>(gts.size());
  p /= static_cast<double>(preds.size());
  return {r, p, (r + p) / 2};
}

} // namespace oracle

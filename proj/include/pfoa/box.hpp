#pragma once

#include <algorithm>

namespace pfoa {

// Axis-aligned pixel rectangle; (x, y) is the top-left corner.
struct RoiBox {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  friend bool operator==(const RoiBox&, const RoiBox&) = default;
};

struct RoiDetection {
  RoiBox box;
  double confidence = 0.0;

  friend bool operator==(const RoiDetection&, const RoiDetection&) = default;
};

inline long long box_area(const RoiBox& b) {
  return static_cast<long long>(b.w) * static_cast<long long>(b.h);
}

inline long long intersection_area(const RoiBox& a, const RoiBox& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.w, b.x + b.w);
  const int y1 = std::min(a.y + a.h, b.y + b.h);
  if (x1 <= x0 || y1 <= y0) return 0;
  return static_cast<long long>(x1 - x0) * static_cast<long long>(y1 - y0);
}

inline double iou(const RoiBox& a, const RoiBox& b) {
  const long long inter = intersection_area(a, b);
  const long long uni = box_area(a) + box_area(b) - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace pfoa

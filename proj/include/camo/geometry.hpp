#pragma once

#include <algorithm>
#include <cmath>

namespace camo {

// Class-labeled box, center + extent, normalized to the image so boxes
// survive tiling and resizing unchanged.
struct BoundingBox {
  int class_id = 0;
  float cx = 0.0f;
  float cy = 0.0f;
  float w = 0.0f;
  float h = 0.0f;
  float confidence = -1.0f;  // optional; negative means unset
};

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ax0 = a.cx - a.w * 0.5, ax1 = a.cx + a.w * 0.5;
  const double ay0 = a.cy - a.h * 0.5, ay1 = a.cy + a.h * 0.5;
  const double bx0 = b.cx - b.w * 0.5, bx1 = b.cx + b.w * 0.5;
  const double by0 = b.cy - b.h * 0.5, by1 = b.cy + b.h * 0.5;
  const double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = ix * iy;
  const double uni =
      static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// IOU of two extents as if concentric; used for anchor matching.
inline double iou_wh(double w1, double h1, double w2, double h2) {
  const double inter = std::min(w1, w2) * std::min(h1, h2);
  const double uni = w1 * h1 + w2 * h2 - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace camo

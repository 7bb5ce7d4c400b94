#pragma once

#include <stdexcept>

namespace ranger {

/// 2-D object detection with a normalized center-size box in [0,1].
struct Detection {
  double cx = 0, cy = 0, w = 0, h = 0;  // normalized
  int class_id = 0;
  int id = 0;
};

struct PixelBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool contains(double x, double y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
};

inline PixelBox to_pixel_box(const Detection& d, int img_w, int img_h) {
  PixelBox b;
  b.x0 = (d.cx - d.w / 2) * img_w;
  b.x1 = (d.cx + d.w / 2) * img_w;
  b.y0 = (d.cy - d.h / 2) * img_h;
  b.y1 = (d.cy + d.h / 2) * img_h;
  return b;
}

inline void validate_detection(const Detection& d) {
  if (d.w <= 0 || d.h <= 0)
    throw std::invalid_argument("detection: non-positive box side");
  if (d.cx - d.w / 2 < 0 || d.cx + d.w / 2 > 1 || d.cy - d.h / 2 < 0 ||
      d.cy + d.h / 2 > 1)
    throw std::invalid_argument("detection: box leaves [0,1]");
}

}  // namespace ranger

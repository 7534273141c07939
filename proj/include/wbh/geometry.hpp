#pragma once

#include <cmath>

namespace wbh {

/// Axis-aligned box in continuous pixel coordinates, origin top-left.
/// Half-open convention: area = (xmax - xmin) * (ymax - ymin).
struct BBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (xmin + xmax); }
  double center_y() const { return 0.5 * (ymin + ymax); }

  bool valid() const {
    return std::isfinite(xmin) && std::isfinite(ymin) && std::isfinite(xmax) &&
           std::isfinite(ymax) && xmin >= 0.0 && ymin >= 0.0 && xmin < xmax &&
           ymin < ymax;
  }

  bool operator==(const BBox&) const = default;
};

/// Intersection-over-union. Symmetric, in [0,1], 0 for disjoint boxes.
double iou(const BBox& a, const BBox& b);

/// Ground-truth box with class label.
struct Annotation {
  BBox bbox;
  int class_id = 0;
  bool difficult = false;

  bool operator==(const Annotation&) const = default;
};

/// Predicted box with class label and confidence in [0,1].
struct Detection {
  BBox bbox;
  int class_id = 0;
  double confidence = 0.0;
};

} // namespace wbh

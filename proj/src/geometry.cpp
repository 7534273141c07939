#include "wbh/geometry.hpp"

#include <algorithm>

namespace wbh {

double iou(const BBox& a, const BBox& b) {
  const double ix = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double iy = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (ix <= 0.0 || iy <= 0.0)
    return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

} // namespace wbh

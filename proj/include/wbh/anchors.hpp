#pragma once

#include <span>
#include <vector>

#include "wbh/geometry.hpp"

namespace wbh {

struct AnchorShape {
  double scale = 0.2;  // fraction of image side
  double aspect = 1.0; // width/height ratio
};

/// Default-box layout: G x G grid, one anchor per shape per cell.
struct AnchorConfig {
  int grid = 8;
  std::vector<AnchorShape> shapes = {{0.20, 1.0}, {0.40, 1.0}, {0.30, 2.0}};
  double pos_iou = 0.5;       // positive-match threshold
  double variance_center = 0.1;
  double variance_size = 0.2;

  int num_anchors() const { return grid * grid * int(shapes.size()); }
  void validate() const; // throws ConfigError
  bool operator==(const AnchorConfig&) const = default;
};

inline bool operator==(const AnchorShape& a, const AnchorShape& b) {
  return a.scale == b.scale && a.aspect == b.aspect;
}

/// Anchors centered on cell centers, clipped to image bounds. Ordering is
/// row-major over cells, then shape index.
std::vector<BBox> generate_anchors(const AnchorConfig& cfg, int image_size);

/// Per-anchor match result. label -1 = background, otherwise a class id.
struct MatchAssignment {
  std::vector<int> gt_index; // -1 = unmatched
  std::vector<int> label;
  int positives = 0; // N of the multibox loss
};

/// Two-phase matching: (i) every ground truth claims its best unclaimed
/// anchor (ties to the lowest anchor index), regardless of IoU; (ii) every
/// remaining anchor with IoU >= pos_iou joins its argmax ground truth.
MatchAssignment match_anchors(std::span<const BBox> anchors,
                              std::span<const Annotation> gts, double pos_iou);

/// Box regression parameterization: center offsets over anchor size and log
/// size ratios, scaled by the variances.
struct OffsetVector {
  double tx = 0.0, ty = 0.0, tw = 0.0, th = 0.0;
};

OffsetVector encode_box(const BBox& gt, const BBox& anchor, double var_center,
                        double var_size); // throws ContractError on degenerate gt
BBox decode_box(const OffsetVector& t, const BBox& anchor, double var_center,
                double var_size);

} // namespace wbh

#include "wbh/anchors.hpp"

#include <algorithm>
#include <cmath>

#include "wbh/error.hpp"

namespace wbh {

void AnchorConfig::validate() const {
  if (grid < 1)
    throw ConfigError("AnchorConfig: grid must be >= 1");
  if (shapes.empty())
    throw ConfigError("AnchorConfig: need at least one anchor shape");
  for (const AnchorShape& s : shapes)
    if (!(s.scale > 0.0 && s.scale <= 1.0) || !(s.aspect > 0.0))
      throw ConfigError("AnchorConfig: scale must be in (0,1], aspect > 0");
  if (!(pos_iou > 0.0 && pos_iou < 1.0))
    throw ConfigError("AnchorConfig: pos_iou must be in (0,1)");
}

std::vector<BBox> generate_anchors(const AnchorConfig& cfg, int image_size) {
  cfg.validate();
  std::vector<BBox> anchors;
  anchors.reserve(std::size_t(cfg.num_anchors()));
  const double cell = double(image_size) / cfg.grid;
  for (int gy = 0; gy < cfg.grid; ++gy) {
    for (int gx = 0; gx < cfg.grid; ++gx) {
      const double cx = (gx + 0.5) * cell;
      const double cy = (gy + 0.5) * cell;
      for (const AnchorShape& s : cfg.shapes) {
        const double root = std::sqrt(s.aspect);
        const double w = s.scale * image_size * root;
        const double h = s.scale * image_size / root;
        BBox b{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
        b.xmin = std::max(b.xmin, 0.0);
        b.ymin = std::max(b.ymin, 0.0);
        b.xmax = std::min(b.xmax, double(image_size));
        b.ymax = std::min(b.ymax, double(image_size));
        anchors.push_back(b);
      }
    }
  }
  return anchors;
}

MatchAssignment match_anchors(std::span<const BBox> anchors,
                              std::span<const Annotation> gts, double pos_iou) {
  if (anchors.empty())
    throw ContractError("match_anchors: no anchors");
  MatchAssignment out;
  out.gt_index.assign(anchors.size(), -1);
  out.label.assign(anchors.size(), -1);
  if (gts.empty())
    return out;

  // IoU table, gts x anchors
  std::vector<double> table(gts.size() * anchors.size());
  for (std::size_t g = 0; g < gts.size(); ++g)
    for (std::size_t a = 0; a < anchors.size(); ++a)
      table[g * anchors.size() + a] = iou(gts[g].bbox, anchors[a]);

  // phase 1: every gt claims its best unclaimed anchor, no IoU floor
  for (std::size_t g = 0; g < gts.size(); ++g) {
    std::size_t best = anchors.size();
    double best_iou = -1.0;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      if (out.gt_index[a] >= 0)
        continue;
      double v = table[g * anchors.size() + a];
      if (v > best_iou) { // strict: ties keep the lowest index
        best_iou = v;
        best = a;
      }
    }
    if (best == anchors.size())
      throw ContractError("match_anchors: more ground truths than anchors");
    out.gt_index[best] = int(g);
    out.label[best] = gts[g].class_id;
  }

  // phase 2: threshold matching for the rest
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (out.gt_index[a] >= 0)
      continue;
    std::size_t best_g = gts.size();
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      double v = table[g * anchors.size() + a];
      if (v > best_iou) {
        best_iou = v;
        best_g = g;
      }
    }
    if (best_g < gts.size() && best_iou >= pos_iou) {
      out.gt_index[a] = int(best_g);
      out.label[a] = gts[best_g].class_id;
    }
  }

  for (int g : out.gt_index)
    if (g >= 0)
      ++out.positives;
  return out;
}

OffsetVector encode_box(const BBox& gt, const BBox& anchor, double var_center,
                        double var_size) {
  if (!(gt.width() > 0.0) || !(gt.height() > 0.0))
    throw ContractError("encode_box: non-positive ground-truth size");
  if (!(anchor.width() > 0.0) || !(anchor.height() > 0.0))
    throw ContractError("encode_box: non-positive anchor size");
  OffsetVector t;
  t.tx = ((gt.center_x() - anchor.center_x()) / anchor.width()) / var_center;
  t.ty = ((gt.center_y() - anchor.center_y()) / anchor.height()) / var_center;
  t.tw = std::log(gt.width() / anchor.width()) / var_size;
  t.th = std::log(gt.height() / anchor.height()) / var_size;
  return t;
}

BBox decode_box(const OffsetVector& t, const BBox& anchor, double var_center,
                double var_size) {
  const double cx = anchor.center_x() + t.tx * var_center * anchor.width();
  const double cy = anchor.center_y() + t.ty * var_center * anchor.height();
  const double w = anchor.width() * std::exp(t.tw * var_size);
  const double h = anchor.height() * std::exp(t.th * var_size);
  return BBox{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

} // namespace wbh

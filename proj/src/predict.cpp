#include "wbh/predict.hpp"

#include <algorithm>

#include "wbh/error.hpp"
#include "wbh/loss.hpp"

namespace wbh {

void PredictConfig::validate() const {
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0))
    throw ConfigError("PredictConfig: score_threshold must be in [0,1]");
  if (!(nms_iou >= 0.0 && nms_iou <= 1.0))
    throw ConfigError("PredictConfig: nms_iou must be in [0,1]");
  if (max_detections < 1)
    throw ConfigError("PredictConfig: max_detections must be >= 1");
}

std::vector<std::size_t> nms_keep(std::span<const Detection> dets,
                                  double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a,
                                                   std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });
  std::vector<std::size_t> keep;
  std::vector<bool> dead(dets.size(), false);
  for (std::size_t i : order) {
    if (dead[i])
      continue;
    keep.push_back(i);
    for (std::size_t j : order)
      if (!dead[j] && j != i &&
          iou(dets[i].bbox, dets[j].bbox) > iou_threshold)
        dead[j] = true;
  }
  return keep;
}

std::vector<Detection> decode_detections(const HeadOutput& heads,
                                         std::span<const BBox> anchors,
                                         const AnchorConfig& acfg,
                                         int num_classes, int image_size,
                                         const PredictConfig& pcfg) {
  pcfg.validate();
  const std::size_t A = anchors.size();
  const std::size_t K = std::size_t(num_classes) + 1;
  if (heads.conf.size() != A * K || heads.loc.size() != A * 4)
    throw ContractError("decode_detections: head sizes do not match anchors");

  // Candidates are gathered per class so NMS never crosses classes.
  std::vector<std::vector<Detection>> per_class(
      static_cast<std::size_t>(num_classes));
  for (std::size_t a = 0; a < A; ++a) {
    const auto probs =
        softmax(std::span<const double>(heads.conf).subspan(a * K, K));
    bool decoded = false;
    BBox box;
    for (int c = 0; c < num_classes; ++c) {
      const double score = probs[std::size_t(c) + 1];
      if (score < pcfg.score_threshold)
        continue;
      if (!decoded) {
        const OffsetVector t{heads.loc[a * 4 + 0], heads.loc[a * 4 + 1],
                             heads.loc[a * 4 + 2], heads.loc[a * 4 + 3]};
        box = decode_box(t, anchors[a], acfg.variance_center,
                         acfg.variance_size);
        box.xmin = std::clamp(box.xmin, 0.0, double(image_size));
        box.ymin = std::clamp(box.ymin, 0.0, double(image_size));
        box.xmax = std::clamp(box.xmax, 0.0, double(image_size));
        box.ymax = std::clamp(box.ymax, 0.0, double(image_size));
        decoded = true;
      }
      if (box.width() > 0.0 && box.height() > 0.0)
        per_class[std::size_t(c)].push_back(Detection{box, c, score});
    }
  }

  std::vector<Detection> merged;
  for (auto& dets : per_class) {
    const auto keep = nms_keep(dets, pcfg.nms_iou);
    for (std::size_t i : keep)
      merged.push_back(dets[i]);
  }
  std::stable_sort(merged.begin(), merged.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.confidence > b.confidence;
                   });
  if (merged.size() > std::size_t(pcfg.max_detections))
    merged.resize(std::size_t(pcfg.max_detections));
  return merged;
}

std::vector<Detection> predict(const ModelState& model, const Image& img,
                               const PredictConfig& pcfg) {
  const HeadOutput heads = forward(model, img);
  const std::vector<BBox> anchors =
      generate_anchors(model.anchors, model.arch.input_size);
  return decode_detections(heads, anchors, model.anchors,
                           model.arch.num_classes, model.arch.input_size,
                           pcfg);
}

} // namespace wbh

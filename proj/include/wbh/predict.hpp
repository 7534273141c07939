#pragma once

#include <span>
#include <vector>

#include "wbh/anchors.hpp"
#include "wbh/geometry.hpp"
#include "wbh/network.hpp"

namespace wbh {

struct PredictConfig {
  double score_threshold = 0.05; // drop candidates below this probability
  double nms_iou = 0.45;         // suppress overlaps strictly above this
  int max_detections = 100;      // global cap per image, by score
  void validate() const;
};

/// Greedy per-class non-maximum suppression. Returns indices into dets
/// (already assumed same-class), highest score first; ties keep input
/// order.
std::vector<std::size_t> nms_keep(std::span<const Detection> dets,
                                  double iou_threshold);

/// Turns raw head outputs into scored boxes: softmax scores, per-class
/// threshold, offset decoding against the anchors, clipping to the image,
/// per-class NMS, then a global top-k by score.
std::vector<Detection> decode_detections(const HeadOutput& heads,
                                         std::span<const BBox> anchors,
                                         const AnchorConfig& acfg,
                                         int num_classes, int image_size,
                                         const PredictConfig& pcfg);

/// forward + decode_detections for one image, using the anchor config
/// carried by the model.
std::vector<Detection> predict(const ModelState& model, const Image& img,
                               const PredictConfig& pcfg);

} // namespace wbh

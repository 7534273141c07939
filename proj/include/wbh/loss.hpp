#pragma once

#include <span>
#include <vector>

#include "wbh/anchors.hpp"
#include "wbh/geometry.hpp"

namespace wbh {

// Huber loss with unit transition point and its derivative.
double smooth_l1(double x);
double smooth_l1_grad(double x);

// Numerically stable softmax; output sums to 1.
std::vector<double> softmax(std::span<const double> logits);

// -log(probs[target]), with the probability floored at 1e-12 so an
// all-wrong prediction yields a large finite loss instead of inf.
double cross_entropy(std::span<const double> probs, int target);

struct LossConfig {
  double alpha = 1.0;         // weight on the localization term
  double neg_pos_ratio = 3.0; // mined negatives per positive
  void validate() const;
};

struct LossResult {
  double total = 0.0; // (conf + alpha * loc) / positives, 0 when unmatched
  double conf = 0.0;  // summed classification loss before normalization
  double loc = 0.0;   // summed localization loss before normalization
  int positives = 0;
  int negatives = 0;
  std::vector<int> selected_negatives; // anchor indices kept by mining
};

// Detection loss for one image.
//
// conf_logits is A x (1 + num_classes) row-major with index 0 the
// background class; loc_preds is A x 4 row-major (tx, ty, tw, th).
// Ground truths are matched to anchors internally (best-anchor claim plus
// IoU threshold); positives contribute a classification term against
// their matched class and a smooth-L1 term against the encoded offsets,
// while hard negative mining keeps the neg_pos_ratio highest-background-
// loss unmatched anchors as background examples.  Difficult ground truths
// participate like any other (the split is an evaluation concern).
//
// When conf_grad / loc_grad are non-empty they must match the prediction
// sizes and receive d(total)/d(logit) and d(total)/d(pred).
LossResult multibox_loss(std::span<const double> conf_logits,
                         std::span<const double> loc_preds,
                         std::span<const BBox> anchors,
                         std::span<const Annotation> gts,
                         const AnchorConfig& acfg, const LossConfig& lcfg,
                         std::span<double> conf_grad = {},
                         std::span<double> loc_grad = {});

} // namespace wbh

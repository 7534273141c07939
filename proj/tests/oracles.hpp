// Independent reference implementations used to cross-check the library.
//
// Everything here is written from the definitions alone (greedy VOC-style
// matching, 11-point / all-point interpolation, the two-phase anchor match
// and the normalized detection loss) without calling into the library, so
// agreement is evidence of correctness rather than of shared bugs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "wbh/anchors.hpp"
#include "wbh/geometry.hpp"
#include "wbh/loss.hpp"

namespace oracle {

inline double iou_ref(const wbh::BBox& a, const wbh::BBox& b) {
  const double ix = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double iy = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (ix <= 0.0 || iy <= 0.0)
    return 0.0;
  const double inter = ix * iy;
  const double uni = (a.xmax - a.xmin) * (a.ymax - a.ymin) +
                     (b.xmax - b.xmin) * (b.ymax - b.ymin) - inter;
  return inter / uni;
}

// ---------------------------------------------------------------------
// Evaluation oracle: AP for one class over a list of images.
// ---------------------------------------------------------------------

struct EvalImage {
  std::vector<wbh::Detection> dets;
  std::vector<wbh::Annotation> gts;
};

// Greedy per-image TP/FP labels, then a global confidence sort (stable:
// image order, then per-image descending order), cumulative P/R, and the
// requested interpolation. Difficult ground truths are invisible: they
// are never match targets and never enter the recall denominator.
inline double ap_ref(const std::vector<EvalImage>& images, int class_id,
                     double iou_thresh, bool eleven_point) {
  struct Labeled {
    double conf;
    bool tp;
  };
  std::vector<Labeled> all;
  int n_gt = 0;
  for (const EvalImage& img : images) {
    for (const wbh::Annotation& g : img.gts)
      if (g.class_id == class_id && !g.difficult)
        ++n_gt;

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < img.dets.size(); ++i)
      if (img.dets[i].class_id == class_id)
        order.push_back(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return img.dets[a].confidence > img.dets[b].confidence;
                     });

    std::vector<bool> used(img.gts.size(), false);
    for (std::size_t i : order) {
      int best = -1;
      double best_iou = 0.0;
      for (std::size_t g = 0; g < img.gts.size(); ++g) {
        if (img.gts[g].class_id != class_id || img.gts[g].difficult ||
            used[g])
          continue;
        const double v = iou_ref(img.dets[i].bbox, img.gts[g].bbox);
        if (v > best_iou) {
          best_iou = v;
          best = int(g);
        }
      }
      const bool tp = best >= 0 && best_iou >= iou_thresh;
      if (tp)
        used[std::size_t(best)] = true;
      all.push_back(Labeled{img.dets[i].confidence, tp});
    }
  }
  if (n_gt == 0)
    return 0.0;

  std::stable_sort(all.begin(), all.end(), [](const Labeled& a,
                                              const Labeled& b) {
    return a.conf > b.conf;
  });
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const Labeled& d : all) {
    (d.tp ? tp : fp) += 1;
    precision.push_back(double(tp) / double(tp + fp));
    recall.push_back(double(tp) / double(n_gt));
  }

  if (eleven_point) {
    double sum = 0.0;
    for (int r = 0; r <= 10; ++r) {
      double best = 0.0;
      for (std::size_t i = 0; i < recall.size(); ++i)
        if (recall[i] >= double(r) / 10.0)
          best = std::max(best, precision[i]);
      sum += best;
    }
    return sum / 11.0;
  }
  // All-point: integrate precision (right envelope) over recall.
  double ap = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    double env = 0.0;
    for (std::size_t j = i; j < precision.size(); ++j)
      env = std::max(env, precision[j]);
    ap += (recall[i] - prev) * env;
    prev = recall[i];
  }
  return ap;
}

// ---------------------------------------------------------------------
// Loss oracle: the normalized detection loss on one small instance.
// ---------------------------------------------------------------------

struct LossRef {
  double total = 0.0;
  double conf = 0.0;
  double loc = 0.0;
  int positives = 0;
};

inline std::vector<double> softmax_ref(const std::vector<double>& z) {
  double m = z[0];
  for (double v : z)
    m = std::max(m, v);
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    sum += p[i];
  }
  for (double& v : p)
    v /= sum;
  return p;
}

inline double smooth_l1_ref(double d) {
  const double a = std::fabs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

// Two-phase matching, confidence loss with ratio-capped hard negatives,
// localization loss over encoded offsets, all divided by the positive
// count (zero positives define a zero loss).
inline LossRef multibox_loss_ref(const std::vector<double>& conf_logits,
                                 const std::vector<double>& loc_preds,
                                 const std::vector<wbh::BBox>& anchors,
                                 const std::vector<wbh::Annotation>& gts,
                                 const wbh::AnchorConfig& acfg,
                                 double alpha, double neg_pos_ratio) {
  const std::size_t A = anchors.size();
  const std::size_t K = conf_logits.size() / A;

  // Phase 1: every ground truth claims its best unclaimed anchor,
  // lowest index on ties, regardless of overlap.
  std::vector<int> match(A, -1);
  for (std::size_t j = 0; j < gts.size(); ++j) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t i = 0; i < A; ++i) {
      if (match[i] >= 0)
        continue;
      const double v = iou_ref(anchors[i], gts[j].bbox);
      if (v > best_iou) {
        best_iou = v;
        best = int(i);
      }
    }
    if (best >= 0)
      match[std::size_t(best)] = int(j);
  }
  // Phase 2: remaining anchors adopt their argmax ground truth when the
  // overlap reaches the positive threshold.
  for (std::size_t i = 0; i < A; ++i) {
    if (match[i] >= 0)
      continue;
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const double v = iou_ref(anchors[i], gts[j].bbox);
      if (v > best_iou) {
        best_iou = v;
        best = int(j);
      }
    }
    if (best >= 0 && best_iou >= acfg.pos_iou)
      match[i] = best;
  }

  LossRef out;
  for (std::size_t i = 0; i < A; ++i)
    if (match[i] >= 0)
      ++out.positives;
  if (out.positives == 0)
    return out;

  std::vector<std::vector<double>> probs(A);
  for (std::size_t i = 0; i < A; ++i)
    probs[i] = softmax_ref(std::vector<double>(
        conf_logits.begin() + long(i * K),
        conf_logits.begin() + long((i + 1) * K)));

  auto ce = [](double p) { return -std::log(std::max(p, 1e-12)); };

  for (std::size_t i = 0; i < A; ++i) {
    if (match[i] < 0)
      continue;
    const wbh::Annotation& g = gts[std::size_t(match[i])];
    out.conf += ce(probs[i][std::size_t(g.class_id) + 1]);
    // Encoded regression targets.
    const wbh::BBox& a = anchors[i];
    const double aw = a.xmax - a.xmin, ah = a.ymax - a.ymin;
    const double gw = g.bbox.xmax - g.bbox.xmin,
                 gh = g.bbox.ymax - g.bbox.ymin;
    const double t[4] = {
        ((g.bbox.xmin + g.bbox.xmax) / 2 - (a.xmin + a.xmax) / 2) / aw /
            acfg.variance_center,
        ((g.bbox.ymin + g.bbox.ymax) / 2 - (a.ymin + a.ymax) / 2) / ah /
            acfg.variance_center,
        std::log(gw / aw) / acfg.variance_size,
        std::log(gh / ah) / acfg.variance_size,
    };
    for (int k = 0; k < 4; ++k)
      out.loc += smooth_l1_ref(loc_preds[i * 4 + std::size_t(k)] - t[k]);
  }

  // Hard negatives: unmatched anchors ranked by background loss
  // (descending), capped at ratio * positives.
  std::vector<std::size_t> negs;
  for (std::size_t i = 0; i < A; ++i)
    if (match[i] < 0)
      negs.push_back(i);
  std::stable_sort(negs.begin(), negs.end(), [&](std::size_t x,
                                                 std::size_t y) {
    return probs[x][0] < probs[y][0]; // higher loss = lower bg probability
  });
  const std::size_t keep = std::min(
      negs.size(), std::size_t(neg_pos_ratio * out.positives));
  for (std::size_t k = 0; k < keep; ++k)
    out.conf += ce(probs[negs[k]][0]);

  out.total = (out.conf + alpha * out.loc) / out.positives;
  return out;
}

} // namespace oracle

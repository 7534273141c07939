#include "wbh/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wbh/error.hpp"

namespace wbh {

namespace {
constexpr double kProbFloor = 1e-12;
} // namespace

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) {
  if (x > 1.0)
    return 1.0;
  if (x < -1.0)
    return -1.0;
  return x;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty())
    throw ContractError("softmax: empty input");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    sum += out[i];
  }
  for (double& v : out)
    v /= sum;
  return out;
}

double cross_entropy(std::span<const double> probs, int target) {
  if (target < 0 || std::size_t(target) >= probs.size())
    throw ContractError("cross_entropy: target out of range");
  return -std::log(std::max(probs[std::size_t(target)], kProbFloor));
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0))
    throw ConfigError("LossConfig: alpha must be >= 0");
  if (!(neg_pos_ratio >= 0.0))
    throw ConfigError("LossConfig: neg_pos_ratio must be >= 0");
}

LossResult multibox_loss(std::span<const double> conf_logits,
                         std::span<const double> loc_preds,
                         std::span<const BBox> anchors,
                         std::span<const Annotation> gts,
                         const AnchorConfig& acfg, const LossConfig& lcfg,
                         std::span<double> conf_grad,
                         std::span<double> loc_grad) {
  lcfg.validate();
  const std::size_t A = anchors.size();
  if (A == 0)
    throw ContractError("multibox_loss: no anchors");
  if (conf_logits.size() % A != 0)
    throw ContractError("multibox_loss: logits not a multiple of anchors");
  const std::size_t K = conf_logits.size() / A; // classes incl. background
  if (K < 2)
    throw ContractError("multibox_loss: need background plus a class");
  if (loc_preds.size() != A * 4)
    throw ContractError("multibox_loss: loc_preds must be anchors x 4");
  if (!conf_grad.empty() && conf_grad.size() != conf_logits.size())
    throw ContractError("multibox_loss: conf_grad size mismatch");
  if (!loc_grad.empty() && loc_grad.size() != loc_preds.size())
    throw ContractError("multibox_loss: loc_grad size mismatch");
  std::fill(conf_grad.begin(), conf_grad.end(), 0.0);
  std::fill(loc_grad.begin(), loc_grad.end(), 0.0);

  const MatchAssignment match = match_anchors(anchors, gts, acfg.pos_iou);
  LossResult res;
  res.positives = match.positives;
  if (res.positives == 0)
    return res; // no matched boxes: the image contributes nothing

  // Per-anchor class probabilities are needed for every anchor (positives
  // for their class loss, the rest for mining), so compute them once.
  std::vector<double> probs(conf_logits.size());
  for (std::size_t a = 0; a < A; ++a) {
    auto p = softmax(conf_logits.subspan(a * K, K));
    std::copy(p.begin(), p.end(), probs.begin() + std::ptrdiff_t(a * K));
  }

  // Hard negative mining: rank unmatched anchors by background loss.
  std::vector<int> candidates;
  candidates.reserve(A);
  for (std::size_t a = 0; a < A; ++a)
    if (match.gt_index[a] < 0)
      candidates.push_back(int(a));
  std::stable_sort(candidates.begin(), candidates.end(), [&](int x, int y) {
    return probs[std::size_t(x) * K] < probs[std::size_t(y) * K];
  });
  const std::size_t keep =
      std::min(candidates.size(),
               std::size_t(lcfg.neg_pos_ratio * res.positives));
  candidates.resize(keep);
  res.selected_negatives = candidates;
  res.negatives = int(keep);

  const double inv_n = 1.0 / res.positives;

  auto add_conf = [&](std::size_t a, std::size_t target) {
    res.conf += cross_entropy(
        std::span<const double>(probs).subspan(a * K, K), int(target));
    if (!conf_grad.empty())
      for (std::size_t k = 0; k < K; ++k)
        conf_grad[a * K + k] +=
            (probs[a * K + k] - (k == target ? 1.0 : 0.0)) * inv_n;
  };

  for (std::size_t a = 0; a < A; ++a) {
    const int g = match.gt_index[a];
    if (g < 0)
      continue;
    add_conf(a, std::size_t(1 + match.label[a]));
    const OffsetVector t =
        encode_box(gts[std::size_t(g)].bbox, anchors[a], acfg.variance_center,
                   acfg.variance_size);
    const double target[4] = {t.tx, t.ty, t.tw, t.th};
    for (int k = 0; k < 4; ++k) {
      const double diff = loc_preds[a * 4 + std::size_t(k)] - target[k];
      res.loc += smooth_l1(diff);
      if (!loc_grad.empty())
        loc_grad[a * 4 + std::size_t(k)] =
            smooth_l1_grad(diff) * lcfg.alpha * inv_n;
    }
  }
  for (int a : res.selected_negatives)
    add_conf(std::size_t(a), 0);

  res.total = (res.conf + lcfg.alpha * res.loc) * inv_n;
  return res;
}

} // namespace wbh

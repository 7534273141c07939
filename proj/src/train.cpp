#include "wbh/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "wbh/error.hpp"
#include "wbh/rng.hpp"

namespace wbh {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr))
    throw ConfigError("TrainConfig: lr must be finite and >= 0");
  if (batch_size < 1)
    throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (steps < 0)
    throw ConfigError("TrainConfig: steps must be >= 0");
  if (!(divergence_limit > 0.0))
    throw ConfigError("TrainConfig: divergence_limit must be > 0");
  loss.validate();
}

LoadedDataset load_dataset(const DatasetManifest& manifest,
                           const std::filesystem::path& base_dir) {
  validate_manifest(manifest);
  LoadedDataset out;
  out.classes = manifest.classes;
  out.samples.reserve(manifest.records.size());
  for (const ImageRecord& rec : manifest.records) {
    LoadedSample s;
    s.image = read_ppm(resolve_image_path(base_dir, rec));
    if (s.image.width != rec.width || s.image.height != rec.height)
      throw ContractError("load_dataset: " + rec.image_path +
                          " does not match its manifest dimensions");
    s.annotations = rec.annotations;
    out.samples.push_back(std::move(s));
  }
  return out;
}

BatchGradient loss_gradient(const ModelState& model,
                            std::span<const LoadedSample> batch,
                            const LossConfig& lcfg) {
  model.validate();
  if (batch.empty())
    throw ContractError("loss_gradient: empty batch");
  const Architecture& arch = model.arch;
  const std::vector<BBox> anchors =
      generate_anchors(model.anchors, arch.input_size);

  BatchGradient out;
  out.grad.assign(model.params.size(), 0.0);
  std::vector<double> conf_grad(std::size_t(arch.num_anchors()) *
                                (arch.num_classes + 1));
  std::vector<double> loc_grad(std::size_t(arch.num_anchors()) * 4);
  ForwardCache cache;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const LoadedSample& sample = batch[b];
    HeadOutput heads = forward(model, sample.image, &cache);
    LossResult loss =
        multibox_loss(heads.conf, heads.loc, anchors, sample.annotations,
                      model.anchors, lcfg, conf_grad, loc_grad);
    if (!std::isfinite(loss.total))
      throw Error("loss_gradient: non-finite loss at batch index " +
                  std::to_string(b));
    out.loss += loss.total;
    if (loss.positives > 0)
      backward(model, cache, conf_grad, loc_grad, out.grad);
  }
  const double inv = 1.0 / double(batch.size());
  out.loss *= inv;
  for (double& g : out.grad)
    g *= inv;
  return out;
}

TrainResult train(ModelState& model, const LoadedDataset& data,
                  const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (data.classes != model.classes)
    throw ContractError("train: dataset classes do not match the model");

  TrainResult result;
  if (cfg.steps == 0)
    return result;
  if (data.samples.empty())
    throw ContractError("train: dataset is empty");

  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  Rng shuffler(cfg.seed, hash64("batch-order"));
  std::size_t cursor = order.size(); // forces a shuffle before the first draw

  std::vector<LoadedSample> batch;
  result.loss_trace.reserve(std::size_t(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    batch.clear();
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        shuffler.shuffle(order);
        cursor = 0;
      }
      batch.push_back(data.samples[order[cursor++]]);
    }
    const BatchGradient bg = loss_gradient(model, batch, cfg.loss);
    result.loss_trace.push_back(bg.loss);
    if (!std::isfinite(bg.loss) || bg.loss > cfg.divergence_limit)
      throw Error("train: diverged at step " + std::to_string(step) +
                  " (batch loss " + std::to_string(bg.loss) + ")");
    for (std::size_t i = 0; i < model.params.size(); ++i)
      model.params[i] -= cfg.lr * bg.grad[i];
    ++model.step;
  }
  return result;
}

TrainResult fine_tune(ModelState& model, const LoadedDataset& data,
                      const TrainConfig& cfg) {
  return train(model, data, cfg);
}

} // namespace wbh

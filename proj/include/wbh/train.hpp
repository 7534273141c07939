#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wbh/anchors.hpp"
#include "wbh/loss.hpp"
#include "wbh/manifest.hpp"
#include "wbh/network.hpp"

namespace wbh {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 16;
  int steps = 300;
  std::uint64_t seed = 7;
  LossConfig loss;
  double divergence_limit = 1e3; // abort once the batch loss exceeds this
  void validate() const;
};

struct LoadedSample {
  Image image;
  std::vector<Annotation> annotations;
};

/// Dataset decoded into memory so the optimizer never touches disk.
struct LoadedDataset {
  std::vector<LoadedSample> samples;
  ClassSet classes;
};

/// Reads every image a manifest refers to. base_dir anchors relative
/// paths (normally the directory holding the manifest file).
LoadedDataset load_dataset(const DatasetManifest& manifest,
                           const std::filesystem::path& base_dir);

struct BatchGradient {
  double loss = 0.0;        // mean detection loss over the batch
  std::vector<double> grad; // d(loss)/d(params), layout of model.params
};

/// Mean multibox loss over a batch and its analytic gradient through the
/// heads, pools, and convolutions.  Throws if any image produces a
/// non-finite loss, naming its batch index.
BatchGradient loss_gradient(const ModelState& model,
                            std::span<const LoadedSample> batch,
                            const LossConfig& lcfg);

struct TrainResult {
  std::vector<double> loss_trace; // mean batch loss, one entry per step
};

/// Plain SGD over uniformly shuffled batches: the sample order is
/// reshuffled (seeded) each time an epoch is exhausted, gradients are
/// averaged over the batch, and parameters move by -lr * grad.  The
/// model is updated in place and its step counter advances.  Throws if
/// the loss diverges (non-finite or above the limit).
TrainResult train(ModelState& model, const LoadedDataset& data,
                  const TrainConfig& cfg);

/// Same mechanics as train, starting from an already-trained model.
/// Callers normally pass a reduced learning rate.
TrainResult fine_tune(ModelState& model, const LoadedDataset& data,
                      const TrainConfig& cfg);

} // namespace wbh

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wbh/anchors.hpp"
#include "wbh/classes.hpp"
#include "wbh/image.hpp"

namespace wbh {

// Three 3x3 conv + ReLU + 2x2 max-pool stages followed by two 1x1
// prediction heads on the final feature map, one for per-anchor class
// logits and one for per-anchor box offsets.  Input images are square
// RGB; each pooling stage halves the resolution, so the feature grid is
// input_size / 8.
struct Architecture {
  int input_size = 64;
  std::array<int, 3> stage_channels = {16, 32, 32};
  int anchors_per_cell = 3;
  int num_classes = 4; // foreground classes; logits add a background slot

  int grid() const { return input_size / 8; }
  int conf_channels() const { return anchors_per_cell * (num_classes + 1); }
  int loc_channels() const { return anchors_per_cell * 4; }
  int num_anchors() const { return grid() * grid() * anchors_per_cell; }
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

struct TensorSpec {
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Offsets of each weight tensor inside the flat parameter vector.  Conv
// weights are [out][in][ky][kx]; head weights are [out][in] (1x1).
struct ParamLayout {
  std::array<TensorSpec, 3> conv_w, conv_b;
  TensorSpec conf_w, conf_b, loc_w, loc_b;
  std::size_t total = 0;
  explicit ParamLayout(const Architecture& arch);
};

// Everything needed to run or resume a detector: the architecture, the
// anchor grid its heads are wired to, the class names its logits index,
// how many SGD steps produced it, and the flat parameter vector.
struct ModelState {
  Architecture arch;
  AnchorConfig anchors;
  ClassSet classes;
  std::int64_t step = 0;
  std::vector<double> params;

  // Throws unless anchors/classes agree with the architecture.
  void validate() const;
};

// He-normal conv/head weights, zero biases, reproducible from the seed.
ModelState init_model(const Architecture& arch, const AnchorConfig& anchors,
                      const ClassSet& classes, std::uint64_t seed);

// Intermediate activations retained for the backward pass.
struct ForwardCache {
  std::vector<double> input;              // 3 x S x S planar, centered
  std::array<std::vector<double>, 3> relu; // post-ReLU, pre-pool
  std::array<std::vector<double>, 3> pool; // post-pool
  std::array<std::vector<int>, 3> argmax;  // winner index per pooled cell
};

struct HeadOutput {
  std::vector<double> conf; // num_anchors x (num_classes + 1), row-major
  std::vector<double> loc;  // num_anchors x 4
};

// Runs the network on one image (must match arch.input_size, square).
// Pixel values are centered by subtracting 0.5 before the first conv.
// Anchor ordering matches generate_anchors: row-major cells, then shape.
HeadOutput forward(const ModelState& model, const Image& img,
                   ForwardCache* cache = nullptr);

// Accumulates d(loss)/d(params) for one image into grad (layout and size
// of model.params), given the head gradients produced by the loss.
void backward(const ModelState& model, const ForwardCache& cache,
              std::span<const double> conf_grad,
              std::span<const double> loc_grad, std::span<double> grad);

// Checkpoint I/O: a short text header, raw little-endian doubles, and a
// trailing FNV-1a checksum of the parameter bytes.
void save_model(const ModelState& model, const std::string& path);
ModelState load_model(const std::string& path);

} // namespace wbh

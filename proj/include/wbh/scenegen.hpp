#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wbh/image.hpp"
#include "wbh/manifest.hpp"

namespace wbh {

/// Procedural traffic-scene generator spec. Classes follow the canonical
/// order car, bus, person, bicycle; scale ranges are the primary object
/// dimension in pixels (width for vehicles, height for persons).
struct SceneSpec {
  int image_size = 64;
  int objects_min = 1;
  int objects_max = 3;

  std::array<std::uint8_t, 3> sky = {158, 178, 203};
  std::array<std::uint8_t, 3> road = {82, 82, 87};
  int horizon = 26;  // first road row
  int noise_amp = 3; // background speckle, in 1/255 steps

  std::array<int, 4> scale_min = {16, 20, 12, 14};
  std::array<int, 4> scale_max = {30, 36, 26, 26};

  std::uint64_t seed = 0;

  void validate() const; // throws ConfigError

  /// "VOC-like" clean family.
  static SceneSpec family_a();
  /// "COCO-like" clean family: different palette and scale ranges.
  static SceneSpec family_b();
};

/// One placed object with its silhouette mask (w*h, 0/1), for tests and
/// occlusion accounting.
struct PlacedObject {
  int class_id = 0;
  int x = 0, y = 0; // top-left of the mask in the image
  int w = 0, h = 0;
  std::vector<std::uint8_t> mask;
};

struct RenderedScene {
  Image image;
  std::vector<Annotation> annotations; // tight bounds of each object's mask
  std::vector<PlacedObject> objects;   // draw order; later entries occlude
};

/// Renders scene `index`. Deterministic in (spec.seed, index); integer
/// arithmetic only, so output bytes are platform-independent. Every placed
/// object keeps at least 40% of its silhouette visible.
RenderedScene render_scene(const SceneSpec& spec, int index);

/// Renders n scenes, writes PPM files and a manifest under out_dir, and
/// returns the manifest. condition_tag is "clean".
DatasetManifest generate_dataset(const SceneSpec& spec, int n,
                                 const std::filesystem::path& out_dir);

} // namespace wbh

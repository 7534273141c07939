#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "wbh/image.hpp"
#include "wbh/manifest.hpp"

namespace wbh {

/// Parametric weather corruption. Kind-specific fields; the rest are ignored.
struct CorruptionSpec {
  enum class Kind { double_gaussian, fog, rain, snow, sand };

  Kind kind = Kind::double_gaussian;

  // double_gaussian
  double sigma1 = 1.0;
  double sigma2 = 2.0;
  // fog: p' = (1-density)*p + density*airlight
  double fog_density = 0.5;
  double airlight = 0.85;
  // rain
  int streak_count = 40;
  int streak_length = 9;
  double streak_alpha = 0.55;
  // snow
  int flake_count = 30;
  int flake_radius = 1;
  // sand: per-channel tint multiply, then blur
  double tint[3] = {1.0, 0.85, 0.6};
  double sand_sigma = 1.0;

  std::uint64_t seed = 0;

  const char* kind_name() const;
  static Kind kind_from_name(const std::string& name); // throws ConfigError
  void validate() const;                               // throws ConfigError
};

/// Applies one corruption. Deterministic given (img, spec).
Image apply_corruption(const Image& img, const CorruptionSpec& spec);

/// Corrupts every image of `m` (resolved against base_dir) with the spec
/// chain applied in order and rewrites them under out_dir. Annotations are
/// copied unchanged; condition_tag becomes "corrupted:<kind[+kind...]>".
/// Per-image randomness is keyed by (spec.seed, image_path), so results do
/// not depend on record order. The manifest is returned only if every image
/// succeeds; failures are collected and reported per image.
DatasetManifest corrupt_dataset(const DatasetManifest& m,
                                const std::filesystem::path& base_dir,
                                std::span<const CorruptionSpec> chain,
                                const std::filesystem::path& out_dir);

/// Single-spec convenience overload.
DatasetManifest corrupt_dataset(const DatasetManifest& m,
                                const std::filesystem::path& base_dir,
                                const CorruptionSpec& spec,
                                const std::filesystem::path& out_dir);

} // namespace wbh

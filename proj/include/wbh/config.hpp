#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wbh/corruption.hpp"
#include "wbh/eval.hpp"
#include "wbh/scenegen.hpp"
#include "wbh/train.hpp"

namespace wbh {

enum class StageId { stage1, stage2, stage3, stage4, tech1, tech2 };
const char* stage_name(StageId id);
StageId stage_from_name(const std::string& name); // throws ConfigError

/// Regression bounds a full run is checked against (frozen after the
/// calibration run; the CLI exits non-zero when a requested stage misses
/// its bound).
struct ExperimentBounds {
  double stage1_min_map = 50.0;      // mAP(stage1) >= this, percent
  double stage2_max_frac = 0.5;      // mAP(stage2) <= frac * mAP(stage1)
  double stage3_min_vs_stage2 = 0.0; // mAP(stage3) - mAP(stage2) >= this
  double tech1_min_gain = 0.0;       // mAP(tech1) - mAP(stage2) > this
  double tech2_min_ratio = 2.0;      // mAP(tech2) >= ratio * mAP(stage2)
};

/// Everything a full experiment run needs: the two clean scene families,
/// dataset sizes, the target-condition corruption (standing in for a real
/// adverse-weather test set) and the training-time corruption used by the
/// blur-training mitigation, optimizer settings, and output layout.
struct ExperimentConfig {
  std::uint64_t seed = 7;
  int train_count = 400;
  int test_count = 100;
  double mix_fraction = 0.10;
  std::vector<StageId> stages;
  std::string out_dir = "out/run";
  bool cache = true;

  SceneSpec scene_a;
  SceneSpec scene_b;
  std::vector<CorruptionSpec> target_corruption; // applied as a chain
  CorruptionSpec train_corruption;               // single spec

  TrainConfig train;
  double fine_tune_lr = 0.0; // defaults() sets train.lr / 10
  int fine_tune_steps = 120;

  EvalConfig eval;
  ExperimentBounds bounds;

  void validate() const;

  /// Re-derives every sub-seed (scenes, corruptions, training) from one
  /// master seed, so a single --seed rekeys the whole run.
  void apply_master_seed(std::uint64_t master);

  /// The shipped default configuration (the calibrated desk-scale run).
  static ExperimentConfig defaults();
};

/// Text round trip, versioned header "wbh-config v1".  parse_config
/// accepts any subset of keys on top of the defaults and rejects unknown
/// sections/keys; dump_config emits every field explicitly, so
/// parse_config(dump_config(c)) == c.
std::string dump_config(const ExperimentConfig& cfg);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig read_config(const std::filesystem::path& path);

} // namespace wbh

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wbh/config.hpp"
#include "wbh/eval.hpp"
#include "wbh/network.hpp"

namespace wbh {

struct StageResult {
  std::string stage;     // "stage1", "stage2_b", "tech2", ...
  std::string train_set; // dataset name the model was trained on
  std::string test_set;  // dataset name it was evaluated on
  EvalReport report;
  std::string checkpoint; // out-dir-relative model path
  double seconds = 0.0;   // wall clock; reported only in timings.txt
};

/// The scalar story of one run: how much the clean-trained model loses on
/// the corrupted test set, and how much of that each mitigation wins back.
struct BiasSummary {
  bool has_bias_gap = false;
  double bias_gap = 0.0;               // mAP(stage1) - mAP(stage2)
  std::vector<double> per_class_delta; // stage1 AP - stage2 AP, per class
  bool ratios_defined = false;         // false when mAP(stage2) == 0
  bool has_stage3 = false;
  double stage3_delta = 0.0; // mAP(stage3) - mAP(stage2)
  bool has_tech1 = false;
  double tech1_ratio = 0.0; // mAP(tech1) / mAP(stage2), if defined
  double tech1_delta = 0.0;
  bool has_tech2 = false;
  double tech2_ratio = 0.0;
  double tech2_delta = 0.0;
};

/// Recomputes the summary from stage reports (A-family stages only).
BiasSummary summarize_bias(const std::vector<StageResult>& stages);

struct RunArtifacts {
  std::filesystem::path out_dir;
  std::vector<StageResult> stages;
  BiasSummary bias;
  std::vector<std::string> bound_failures; // empty when every bound held
  bool bounds_pass() const { return bound_failures.empty(); }
};

/// Executes the bias identification and mitigation procedure.  Datasets
/// and checkpoints are built on demand, written under out_dir, and (when
/// cfg.cache is on) reused across runs via content keys derived from the
/// producing configuration.
class Pipeline {
public:
  explicit Pipeline(const ExperimentConfig& cfg);

  // Individual stages.  Model-dependent stages (stage2, tech1) require
  // the stage-1 checkpoint to exist, either from this process or from a
  // previous cached run.
  StageResult run_stage1();
  StageResult run_stage2();
  StageResult run_stage3();
  std::vector<StageResult> run_stage4(); // stages 1-3 on the B family
  StageResult run_technique1();
  StageResult run_technique2();

  /// Runs cfg.stages in dependency order; writes tables, detection
  /// dumps, summary.json, artifacts.txt, and timings.txt; checks bounds.
  RunArtifacts run();

  /// Builds (or loads) a dataset by its fixed pipeline name, e.g.
  /// "clean_a_train", "target_test_a", "blur_train_a", "mix_a".
  const DatasetManifest& dataset(const std::string& name);

  /// Verifies that no training input derives from test images and that
  /// the blur-training stage never saw the target corruption.  Throws
  /// ContractError naming the violating record.
  void assert_split_hygiene();

  const std::filesystem::path& out_dir() const { return out_; }
  const std::filesystem::path& data_dir() const { return data_; }

private:
  Architecture arch_() const;
  AnchorConfig anchor_cfg_() const;
  std::filesystem::path manifest_path_(const std::string& name) const;
  DatasetManifest build_dataset_(const std::string& name);
  std::string dataset_key_(const std::string& name);
  std::string model_key_(const std::string& name);
  const ModelState& obtain_model_(const std::string& name, bool allow_train);
  StageResult eval_stage_(const std::string& stage,
                          const std::string& model_name,
                          const std::string& test_name);

  ExperimentConfig cfg_;
  std::filesystem::path out_, data_, models_, tables_, detections_;
  std::map<std::string, DatasetManifest> datasets_;
  std::map<std::string, std::string> dataset_keys_;
  std::map<std::string, ModelState> model_cache_;
  std::map<std::string, std::string> model_keys_;
};

/// Convenience wrapper: Pipeline(cfg).run().
RunArtifacts run_experiment(const ExperimentConfig& cfg);

} // namespace wbh

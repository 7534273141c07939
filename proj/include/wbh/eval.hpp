#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wbh/classes.hpp"
#include "wbh/geometry.hpp"
#include "wbh/manifest.hpp"
#include "wbh/predict.hpp"
#include "wbh/train.hpp"

namespace wbh {

enum class ApMethod { eleven_point, all_point };
const char* ap_method_name(ApMethod m);
ApMethod ap_method_from_name(const std::string& name); // throws ConfigError

struct LabeledDetection {
  double confidence = 0.0;
  bool tp = false;
};

/// Greedy TP/FP assignment for one image and one class, in descending
/// confidence order (ties keep input order): a detection is a TP when its
/// highest-IoU unmatched non-difficult ground truth reaches iou_thresh,
/// otherwise an FP.  Difficult ground truths are never match targets and
/// never count toward recall denominators.
std::vector<LabeledDetection> assign_tp_fp(std::span<const Detection> dets,
                                           std::span<const Annotation> gts,
                                           int class_id, double iou_thresh);

struct PrPoint {
  double cutoff = 0.0; // confidence of the detection adding this point
  int cum_tp = 0;
  int cum_fp = 0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Cumulative precision/recall along the (internally re-sorted) labeled
/// detections; one point per detection.
std::vector<PrPoint> pr_curve(std::vector<LabeledDetection> labeled,
                              int n_gt);

/// 11-point: mean over recall cutoffs {0, 0.1, ..., 1.0} of the maximum
/// precision at recall >= cutoff.  All-point: area under the
/// right-enveloped precision curve.  n_gt == 0 defines AP = 0.
double average_precision(std::span<const PrPoint> curve, int n_gt,
                         ApMethod method);

/// Arithmetic mean, zeros included. Rejects empty input.
double mean_ap(std::span<const double> per_class);

struct EvalConfig {
  double iou_threshold = 0.5;
  ApMethod method = ApMethod::eleven_point;
  PredictConfig predict;
  void validate() const;
};

/// One table row: per-class AP and mAP in percent (rounded to 2 decimals
/// at construction so stored values equal printed values), plus counts
/// and provenance.
struct EvalReport {
  std::string label;
  ClassSet classes;
  std::vector<double> ap;    // percent, one per class
  std::vector<bool> zero_gt; // class had no ground truth (AP forced to 0)
  double map = 0.0;          // mean of ap, percent
  int num_images = 0;
  std::vector<int> gt_count;  // non-difficult ground truths per class
  std::vector<int> det_count; // detections per class
  std::string model_id;
  std::string dataset_id;
  double iou_threshold = 0.5;
  ApMethod method = ApMethod::eleven_point;
};

/// Scores pre-computed detections; element i of both spans describes
/// image i.  Rejects empty test sets.
EvalReport evaluate_detections(
    std::span<const std::vector<Detection>> dets_per_image,
    std::span<const std::vector<Annotation>> gts_per_image,
    const ClassSet& classes, const EvalConfig& cfg);

/// Runs the model over every image of the set, then scores.
EvalReport evaluate_model(const ModelState& model, const LoadedDataset& data,
                          const EvalConfig& cfg);

/// Detection dump, one line per detection:
///   image_path<TAB>class_id<TAB>confidence<TAB>xmin,ymin,xmax,ymax
/// dets_per_image is aligned with m.records.
void write_detections(const DatasetManifest& m,
                      std::span<const std::vector<Detection>> dets_per_image,
                      const std::filesystem::path& path);

/// Scores a detection dump against a manifest. Lines must reference
/// record paths verbatim; '#' comments and blank lines are skipped.
EvalReport evaluate_dump(const std::filesystem::path& dump_path,
                         const DatasetManifest& m, const EvalConfig& cfg);

enum class TableFormat { markdown, csv };

/// One row per report: label, per-class AP columns, mAP.  All reports
/// must share a class set; zero reports yield just the header.
std::string render_report_table(std::span<const EvalReport> reports,
                                TableFormat format);

} // namespace wbh

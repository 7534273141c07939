#include "wbh/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "wbh/error.hpp"

namespace wbh {

const char* ap_method_name(ApMethod m) {
  return m == ApMethod::eleven_point ? "11point" : "allpoint";
}

ApMethod ap_method_from_name(const std::string& name) {
  if (name == "11point")
    return ApMethod::eleven_point;
  if (name == "allpoint")
    return ApMethod::all_point;
  throw ConfigError("unknown AP method '" + name +
                    "' (expected 11point or allpoint)");
}

void EvalConfig::validate() const {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
    throw ConfigError("EvalConfig: iou_threshold must be in (0,1)");
  predict.validate();
}

std::vector<LabeledDetection> assign_tp_fp(std::span<const Detection> dets,
                                           std::span<const Annotation> gts,
                                           int class_id, double iou_thresh) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (dets[i].class_id == class_id)
      order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a,
                                                   std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });

  std::vector<bool> claimed(gts.size(), false);
  std::vector<LabeledDetection> out;
  out.reserve(order.size());
  for (std::size_t i : order) {
    std::size_t best = gts.size();
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].class_id != class_id || gts[g].difficult || claimed[g])
        continue;
      const double v = iou(dets[i].bbox, gts[g].bbox);
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    const bool tp = best < gts.size() && best_iou >= iou_thresh;
    if (tp)
      claimed[best] = true;
    out.push_back(LabeledDetection{dets[i].confidence, tp});
  }
  return out;
}

std::vector<PrPoint> pr_curve(std::vector<LabeledDetection> labeled,
                              int n_gt) {
  if (n_gt < 0)
    throw ContractError("pr_curve: negative ground-truth count");
  std::stable_sort(labeled.begin(), labeled.end(),
                   [](const LabeledDetection& a, const LabeledDetection& b) {
                     return a.confidence > b.confidence;
                   });
  std::vector<PrPoint> curve;
  curve.reserve(labeled.size());
  int tp = 0, fp = 0;
  for (const LabeledDetection& d : labeled) {
    (d.tp ? tp : fp) += 1;
    PrPoint p;
    p.cutoff = d.confidence;
    p.cum_tp = tp;
    p.cum_fp = fp;
    p.precision = double(tp) / double(tp + fp);
    p.recall = n_gt > 0 ? double(tp) / double(n_gt) : 0.0;
    curve.push_back(p);
  }
  return curve;
}

double average_precision(std::span<const PrPoint> curve, int n_gt,
                         ApMethod method) {
  if (n_gt <= 0)
    return 0.0; // undefined recall: reported as a hard zero
  if (method == ApMethod::eleven_point) {
    double sum = 0.0;
    for (int r = 0; r <= 10; ++r) {
      const double cutoff = double(r) / 10.0;
      double best = 0.0;
      for (const PrPoint& p : curve)
        if (p.recall >= cutoff)
          best = std::max(best, p.precision);
      sum += best;
    }
    return sum / 11.0;
  }
  // All-point: area under the right-side precision envelope.
  std::vector<double> env(curve.size());
  double running = 0.0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    running = std::max(running, curve[i].precision);
    env[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    ap += (curve[i].recall - prev_recall) * env[i];
    prev_recall = curve[i].recall;
  }
  return ap;
}

double mean_ap(std::span<const double> per_class) {
  if (per_class.empty())
    throw ContractError("mean_ap: empty class list");
  double sum = 0.0;
  for (double v : per_class)
    sum += v;
  return sum / double(per_class.size());
}

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

} // namespace

EvalReport evaluate_detections(
    std::span<const std::vector<Detection>> dets_per_image,
    std::span<const std::vector<Annotation>> gts_per_image,
    const ClassSet& classes, const EvalConfig& cfg) {
  cfg.validate();
  if (dets_per_image.size() != gts_per_image.size())
    throw ContractError("evaluate: detection/ground-truth image counts differ");
  if (gts_per_image.empty())
    throw ContractError("evaluate: empty test set");
  if (classes.size() == 0)
    throw ContractError("evaluate: empty class set");

  EvalReport rep;
  rep.classes = classes;
  rep.num_images = int(gts_per_image.size());
  rep.iou_threshold = cfg.iou_threshold;
  rep.method = cfg.method;
  rep.gt_count.assign(classes.size(), 0);
  rep.det_count.assign(classes.size(), 0);

  for (int c = 0; c < int(classes.size()); ++c) {
    std::vector<LabeledDetection> labeled;
    int n_gt = 0;
    for (std::size_t i = 0; i < gts_per_image.size(); ++i) {
      for (const Annotation& a : gts_per_image[i])
        if (a.class_id == c && !a.difficult)
          ++n_gt;
      auto img_labels = assign_tp_fp(dets_per_image[i], gts_per_image[i], c,
                                     cfg.iou_threshold);
      labeled.insert(labeled.end(), img_labels.begin(), img_labels.end());
    }
    rep.gt_count[std::size_t(c)] = n_gt;
    rep.det_count[std::size_t(c)] = int(labeled.size());
    rep.zero_gt.push_back(n_gt == 0);
    const auto curve = pr_curve(std::move(labeled), n_gt);
    rep.ap.push_back(round2(100.0 * average_precision(curve, n_gt,
                                                      cfg.method)));
  }
  rep.map = mean_ap(rep.ap);
  return rep;
}

EvalReport evaluate_model(const ModelState& model, const LoadedDataset& data,
                          const EvalConfig& cfg) {
  model.validate();
  if (data.classes != model.classes)
    throw ContractError("evaluate: model and dataset class sets differ");
  if (data.samples.empty())
    throw ContractError("evaluate: empty test set");
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<Annotation>> gts;
  dets.reserve(data.samples.size());
  gts.reserve(data.samples.size());
  for (const LoadedSample& s : data.samples) {
    dets.push_back(predict(model, s.image, cfg.predict));
    gts.push_back(s.annotations);
  }
  return evaluate_detections(dets, gts, data.classes, cfg);
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{})
    throw ContractError("fmt_double: value does not format");
  return std::string(buf, end);
}

double parse_double_field(std::string_view s, int line_no) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("detection dump line " + std::to_string(line_no) +
                         ": bad number '" + std::string(s) + "'",
                     0);
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

} // namespace

void write_detections(const DatasetManifest& m,
                      std::span<const std::vector<Detection>> dets_per_image,
                      const std::filesystem::path& path) {
  if (dets_per_image.size() != m.records.size())
    throw ContractError("write_detections: per-image list does not match "
                        "manifest record count");
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw IoError("write_detections: cannot open " + path.string());
  for (std::size_t i = 0; i < m.records.size(); ++i)
    for (const Detection& d : dets_per_image[i])
      f << m.records[i].image_path << '\t' << d.class_id << '\t'
        << fmt_double(d.confidence) << '\t' << fmt_double(d.bbox.xmin) << ','
        << fmt_double(d.bbox.ymin) << ',' << fmt_double(d.bbox.xmax) << ','
        << fmt_double(d.bbox.ymax) << '\n';
  if (!f)
    throw IoError("write_detections: write failed for " + path.string());
}

EvalReport evaluate_dump(const std::filesystem::path& dump_path,
                         const DatasetManifest& m, const EvalConfig& cfg) {
  std::ifstream f(dump_path, std::ios::binary);
  if (!f)
    throw IoError("evaluate_dump: cannot open " + dump_path.string());

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < m.records.size(); ++i)
    index.emplace(m.records[i].image_path, i);

  std::vector<std::vector<Detection>> dets(m.records.size());
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty() || line[0] == '#')
      continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 4)
      throw ParseError("detection dump line " + std::to_string(line_no) +
                           ": expected 4 tab-separated fields, got " +
                           std::to_string(fields.size()),
                       0);
    const auto it = index.find(std::string(fields[0]));
    if (it == index.end())
      throw ParseError("detection dump line " + std::to_string(line_no) +
                           ": image '" + std::string(fields[0]) +
                           "' is not in the manifest",
                       0);
    Detection d;
    d.class_id = int(parse_double_field(fields[1], line_no));
    if (d.class_id < 0 || std::size_t(d.class_id) >= m.classes.size())
      throw ParseError("detection dump line " + std::to_string(line_no) +
                           ": class id out of range",
                       0);
    d.confidence = parse_double_field(fields[2], line_no);
    const auto coords = split(fields[3], ',');
    if (coords.size() != 4)
      throw ParseError("detection dump line " + std::to_string(line_no) +
                           ": expected xmin,ymin,xmax,ymax",
                       0);
    d.bbox = BBox{parse_double_field(coords[0], line_no),
                  parse_double_field(coords[1], line_no),
                  parse_double_field(coords[2], line_no),
                  parse_double_field(coords[3], line_no)};
    dets[it->second].push_back(d);
  }

  std::vector<std::vector<Annotation>> gts;
  gts.reserve(m.records.size());
  for (const ImageRecord& r : m.records)
    gts.push_back(r.annotations);
  EvalReport rep = evaluate_detections(dets, gts, m.classes, cfg);
  rep.dataset_id = m.provenance;
  rep.model_id = dump_path.filename().string();
  return rep;
}

namespace {

std::string fmt_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

} // namespace

std::string render_report_table(std::span<const EvalReport> reports,
                                TableFormat format) {
  const ClassSet* classes = nullptr;
  for (const EvalReport& r : reports) {
    if (!classes)
      classes = &r.classes;
    else if (!(r.classes == *classes))
      throw ContractError("render_report_table: reports mix class sets");
  }
  const std::vector<std::string> names =
      classes ? classes->names() : ClassSet::canonical().names();

  std::string out;
  if (format == TableFormat::csv) {
    out += "run";
    for (const std::string& n : names)
      out += "," + n;
    out += ",mAP\n";
    for (const EvalReport& r : reports) {
      out += r.label;
      for (double ap : r.ap)
        out += "," + fmt_pct(ap);
      out += "," + fmt_pct(r.map) + "\n";
    }
    return out;
  }
  out += "| run |";
  for (const std::string& n : names)
    out += " " + n + " |";
  out += " mAP |\n|---|";
  for (std::size_t i = 0; i < names.size(); ++i)
    out += "---|";
  out += "---|\n";
  for (const EvalReport& r : reports) {
    out += "| " + r.label + " |";
    for (double ap : r.ap)
      out += " " + fmt_pct(ap) + " |";
    out += " " + fmt_pct(r.map) + " |\n";
  }
  return out;
}

} // namespace wbh

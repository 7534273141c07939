#include "wbh/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wbh/corruption.hpp"
#include "wbh/error.hpp"
#include "wbh/manifest.hpp"
#include "wbh/predict.hpp"
#include "wbh/rng.hpp"
#include "wbh/scenegen.hpp"
#include "wbh/train.hpp"

namespace wbh {

namespace {

std::string hex16(std::uint64_t v) {
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[v & 0xf];
    v >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f)
    throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f)
    throw IoError("cannot open " + p.string() + " for writing");
  f << s;
  if (!f)
    throw IoError("write failed for " + p.string());
}

std::string describe_scene(const SceneSpec& s) {
  std::ostringstream ss;
  ss << "scene:" << s.image_size << ',' << s.objects_min << ','
     << s.objects_max << ",sky=" << int(s.sky[0]) << '.' << int(s.sky[1])
     << '.' << int(s.sky[2]) << ",road=" << int(s.road[0]) << '.'
     << int(s.road[1]) << '.' << int(s.road[2]) << ",h=" << s.horizon
     << ",noise=" << s.noise_amp << ",smin=";
  for (int v : s.scale_min)
    ss << v << '.';
  ss << "smax=";
  for (int v : s.scale_max)
    ss << v << '.';
  ss << "seed=" << s.seed;
  return ss.str();
}

std::string describe_corruption(const CorruptionSpec& c) {
  std::ostringstream ss;
  ss << c.kind_name() << ':' << c.sigma1 << ',' << c.sigma2 << ','
     << c.fog_density << ',' << c.airlight << ',' << c.streak_count << ','
     << c.streak_length << ',' << c.streak_alpha << ',' << c.flake_count
     << ',' << c.flake_radius << ',' << c.tint[0] << ',' << c.tint[1] << ','
     << c.tint[2] << ',' << c.sand_sigma << ",seed=" << c.seed;
  return ss.str();
}

std::string describe_chain(std::span<const CorruptionSpec> chain) {
  std::string out;
  for (const CorruptionSpec& c : chain)
    out += describe_corruption(c) + "|";
  return out;
}

// First path component of a manifest-relative image path.
std::string top_dir(const std::string& path) {
  const std::size_t pos = path.find('/');
  return pos == std::string::npos ? std::string() : path.substr(0, pos);
}

std::string filename_of(const std::string& path) {
  const std::size_t pos = path.find_last_of('/');
  return pos == std::string::npos ? path : path.substr(pos + 1);
}

const std::string* train_set_of_model(const std::string& model_name) {
  static const std::map<std::string, std::string> sets = {
      {"stage1_a", "clean_a_train"}, {"stage3_a", "mix_a"},
      {"tech1_a", "target_train_a"}, {"tech2_a", "blur_train_a"},
      {"stage1_b", "clean_b_train"}, {"stage3_b", "mix_b"},
  };
  auto it = sets.find(model_name);
  return it == sets.end() ? nullptr : &it->second;
}

} // namespace

Pipeline::Pipeline(const ExperimentConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  out_ = cfg_.out_dir;
  data_ = out_ / "data";
  models_ = out_ / "models";
  tables_ = out_ / "tables";
  detections_ = out_ / "detections";
  for (const auto& d : {out_, data_, models_, tables_, detections_})
    std::filesystem::create_directories(d);
}

Architecture Pipeline::arch_() const {
  Architecture a;
  a.input_size = cfg_.scene_a.image_size;
  return a;
}

AnchorConfig Pipeline::anchor_cfg_() const {
  AnchorConfig ac;
  ac.grid = arch_().grid();
  return ac;
}

std::filesystem::path Pipeline::manifest_path_(const std::string& name) const {
  return data_ / (name + ".manifest.txt");
}

std::string Pipeline::dataset_key_(const std::string& name) {
  auto it = dataset_keys_.find(name);
  if (it != dataset_keys_.end())
    return it->second;
  std::string text;
  if (name == "clean_a_train" || name == "clean_a_test" ||
      name == "clean_b_train" || name == "clean_b_test") {
    const bool family_a = name[6] == 'a';
    const bool train = name.ends_with("_train");
    SceneSpec s = family_a ? cfg_.scene_a : cfg_.scene_b;
    s.seed = hash_mix(s.seed, hash64(train ? "train" : "test"));
    text = "scenegen|" + describe_scene(s) +
           "|n=" + std::to_string(train ? cfg_.train_count : cfg_.test_count);
  } else if (name == "target_test_a" || name == "target_train_a" ||
             name == "target_test_b" || name == "target_train_b") {
    const std::string parent = name.ends_with("_a")
                                   ? (name.starts_with("target_test")
                                          ? "clean_a_test"
                                          : "clean_a_train")
                                   : (name.starts_with("target_test")
                                          ? "clean_b_test"
                                          : "clean_b_train");
    text = "corrupt|" + dataset_key_(parent) + "|" +
           describe_chain(cfg_.target_corruption);
  } else if (name == "blur_train_a") {
    text = "corrupt|" + dataset_key_("clean_a_train") + "|" +
           describe_corruption(cfg_.train_corruption);
  } else if (name == "mix_a" || name == "mix_b") {
    const bool family_a = name == "mix_a";
    text = "mix|" +
           dataset_key_(family_a ? "clean_a_train" : "clean_b_train") + "|" +
           dataset_key_(family_a ? "target_train_a" : "target_train_b") +
           "|f=" + std::to_string(cfg_.mix_fraction) + "|seed=" +
           std::to_string(hash_mix(cfg_.seed,
                                   hash64(family_a ? "mix-a" : "mix-b")));
  } else {
    throw ContractError("dataset_key: unknown dataset '" + name + "'");
  }
  const std::string digest = hex16(hash64(text));
  dataset_keys_.emplace(name, digest);
  return digest;
}

DatasetManifest Pipeline::build_dataset_(const std::string& name) {
  auto reroot = [&](DatasetManifest m) {
    for (ImageRecord& r : m.records)
      r.image_path = name + "/" + r.image_path;
    return m;
  };
  auto corrupted = [&](const std::string& parent,
                       std::span<const CorruptionSpec> chain) {
    const DatasetManifest& src = dataset(parent);
    return reroot(corrupt_dataset(src, data_, chain, data_ / name));
  };

  if (name == "clean_a_train" || name == "clean_a_test" ||
      name == "clean_b_train" || name == "clean_b_test") {
    const bool family_a = name[6] == 'a';
    const bool train = name.ends_with("_train");
    SceneSpec s = family_a ? cfg_.scene_a : cfg_.scene_b;
    // Train and test draw from disjoint seeded streams of the same family.
    s.seed = hash_mix(s.seed, hash64(train ? "train" : "test"));
    const int n = train ? cfg_.train_count : cfg_.test_count;
    return reroot(generate_dataset(s, n, data_ / name));
  }
  if (name == "target_test_a")
    return corrupted("clean_a_test", cfg_.target_corruption);
  if (name == "target_train_a")
    return corrupted("clean_a_train", cfg_.target_corruption);
  if (name == "target_test_b")
    return corrupted("clean_b_test", cfg_.target_corruption);
  if (name == "target_train_b")
    return corrupted("clean_b_train", cfg_.target_corruption);
  if (name == "blur_train_a")
    return corrupted("clean_a_train", {&cfg_.train_corruption, 1});
  if (name == "mix_a" || name == "mix_b") {
    const bool family_a = name == "mix_a";
    const DatasetManifest& clean =
        dataset(family_a ? "clean_a_train" : "clean_b_train");
    const DatasetManifest& corr =
        dataset(family_a ? "target_train_a" : "target_train_b");
    return mix_datasets(clean, corr, cfg_.mix_fraction,
                        hash_mix(cfg_.seed,
                                 hash64(family_a ? "mix-a" : "mix-b")));
  }
  throw ContractError("build_dataset: unknown dataset '" + name + "'");
}

const DatasetManifest& Pipeline::dataset(const std::string& name) {
  auto it = datasets_.find(name);
  if (it != datasets_.end())
    return it->second;

  const std::string key = dataset_key_(name);
  const auto mpath = manifest_path_(name);
  const auto kpath = data_ / (name + ".key");
  if (cfg_.cache && std::filesystem::exists(mpath) &&
      std::filesystem::exists(kpath) &&
      read_text_file(kpath) == key + "\n") {
    auto [pos, ok] = datasets_.emplace(name, read_manifest(mpath));
    return pos->second;
  }

  DatasetManifest built = build_dataset_(name);
  validate_manifest(built);
  write_manifest(built, mpath);
  write_text_file(kpath, key + "\n");
  auto [pos, ok] = datasets_.emplace(name, std::move(built));
  return pos->second;
}

std::string Pipeline::model_key_(const std::string& name) {
  auto it = model_keys_.find(name);
  if (it != model_keys_.end())
    return it->second;
  const Architecture a = arch_();
  std::ostringstream ss;
  ss << "arch:" << a.input_size << ',' << a.stage_channels[0] << ','
     << a.stage_channels[1] << ',' << a.stage_channels[2] << ','
     << a.anchors_per_cell << ',' << a.num_classes << "|loss:"
     << cfg_.train.loss.alpha << ',' << cfg_.train.loss.neg_pos_ratio
     << "|batch:" << cfg_.train.batch_size << "|div:"
     << cfg_.train.divergence_limit << "|seed:"
     << hash_mix(cfg_.train.seed, hash64(name));
  std::string text;
  if (name == "tech1_a") {
    text = "finetune|" + model_key_("stage1_a") + "|" +
           dataset_key_("target_train_a") + "|lr=" +
           std::to_string(cfg_.fine_tune_lr) + "|steps=" +
           std::to_string(cfg_.fine_tune_steps) + "|" + ss.str();
  } else {
    const std::string* train_set = train_set_of_model(name);
    if (!train_set)
      throw ContractError("model_key: unknown model '" + name + "'");
    text = "train|" + dataset_key_(*train_set) + "|lr=" +
           std::to_string(cfg_.train.lr) + "|steps=" +
           std::to_string(cfg_.train.steps) + "|" + ss.str();
  }
  const std::string digest = hex16(hash64(text));
  model_keys_.emplace(name, digest);
  return digest;
}

const ModelState& Pipeline::obtain_model_(const std::string& name,
                                          bool allow_train) {
  auto it = model_cache_.find(name);
  if (it != model_cache_.end())
    return it->second;

  const std::string key = model_key_(name);
  const auto mpath = models_ / (name + ".wbhm");
  const auto kpath = models_ / (name + ".key");
  const Architecture arch = arch_();
  if (cfg_.cache && std::filesystem::exists(mpath) &&
      std::filesystem::exists(kpath) &&
      read_text_file(kpath) == key + "\n") {
    ModelState m = load_model(mpath.string());
    if (!(m.arch == arch) || !(m.classes == ClassSet::canonical()))
      throw VersionError("checkpoint " + mpath.string() +
                         " was built for a different configuration");
    auto [pos, ok] = model_cache_.emplace(name, std::move(m));
    return pos->second;
  }

  if (!allow_train)
    throw ContractError(name + " checkpoint not found; run its training "
                                "stage first");

  ModelState model;
  TrainConfig tc = cfg_.train;
  tc.seed = hash_mix(cfg_.train.seed, hash64(name));
  if (name == "tech1_a") {
    model = obtain_model_("stage1_a", false);
    tc.lr = cfg_.fine_tune_lr;
    tc.steps = cfg_.fine_tune_steps;
    const DatasetManifest& m = dataset("target_train_a");
    fine_tune(model, load_dataset(m, data_), tc);
  } else {
    const std::string* train_set = train_set_of_model(name);
    if (!train_set)
      throw ContractError("obtain_model: unknown model '" + name + "'");
    model = init_model(arch, anchor_cfg_(), ClassSet::canonical(),
                       hash_mix(cfg_.train.seed, hash64(name + "-init")));
    const DatasetManifest& m = dataset(*train_set);
    train(model, load_dataset(m, data_), tc);
  }
  save_model(model, mpath.string());
  write_text_file(kpath, key + "\n");
  auto [pos, ok] = model_cache_.emplace(name, std::move(model));
  return pos->second;
}

StageResult Pipeline::eval_stage_(const std::string& stage,
                                  const std::string& model_name,
                                  const std::string& test_name) {
  const auto t0 = std::chrono::steady_clock::now();
  const bool model_stage =
      stage != "stage2" && stage != "stage2_b"; // eval-only stages
  const ModelState& model = obtain_model_(model_name, model_stage);
  const DatasetManifest& test = dataset(test_name);
  const LoadedDataset data = load_dataset(test, data_);

  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<Annotation>> gts;
  dets.reserve(data.samples.size());
  gts.reserve(data.samples.size());
  for (const LoadedSample& s : data.samples) {
    dets.push_back(predict(model, s.image, cfg_.eval.predict));
    gts.push_back(s.annotations);
  }
  write_detections(test, dets, detections_ / (stage + ".tsv"));

  EvalReport rep = evaluate_detections(dets, gts, test.classes, cfg_.eval);
  rep.label = stage;
  rep.model_id = model_name;
  rep.dataset_id = test_name;

  StageResult r;
  r.stage = stage;
  const std::string* train_set = train_set_of_model(model_name);
  r.train_set = train_set ? *train_set : "";
  r.test_set = test_name;
  r.report = std::move(rep);
  r.checkpoint = "models/" + model_name + ".wbhm";
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            t0)
                  .count();
  return r;
}

StageResult Pipeline::run_stage1() {
  return eval_stage_("stage1", "stage1_a", "clean_a_test");
}

StageResult Pipeline::run_stage2() {
  return eval_stage_("stage2", "stage1_a", "target_test_a");
}

StageResult Pipeline::run_stage3() {
  return eval_stage_("stage3", "stage3_a", "target_test_a");
}

std::vector<StageResult> Pipeline::run_stage4() {
  std::vector<StageResult> out;
  out.push_back(eval_stage_("stage1_b", "stage1_b", "clean_b_test"));
  out.push_back(eval_stage_("stage2_b", "stage1_b", "target_test_b"));
  out.push_back(eval_stage_("stage3_b", "stage3_b", "target_test_b"));
  return out;
}

StageResult Pipeline::run_technique1() {
  return eval_stage_("tech1", "tech1_a", "target_test_a");
}

StageResult Pipeline::run_technique2() {
  StageResult r = eval_stage_("tech2", "tech2_a", "target_test_a");
  assert_split_hygiene();
  return r;
}

void Pipeline::assert_split_hygiene() {
  auto is_test_dir = [](const std::string& d) {
    return d.find("_test") != std::string::npos;
  };
  auto is_train_dir = [](const std::string& d) {
    return d.find("_train") != std::string::npos;
  };

  for (const auto& [name, m] : datasets_) {
    const bool test_set = is_test_dir(name);
    for (const ImageRecord& r : m.records) {
      const std::string dir = top_dir(r.image_path);
      if (dir.empty())
        throw ContractError("split hygiene: " + name + " record '" +
                            r.image_path + "' has no dataset directory");
      if (test_set && is_train_dir(dir))
        throw ContractError("split hygiene: test set " + name +
                            " contains training image " + r.image_path);
      if (!test_set && is_test_dir(dir))
        throw ContractError("split hygiene: training set " + name +
                            " contains test image " + r.image_path);
    }
  }

  // Corrupted test sets must be exactly their clean counterparts, image
  // for image.
  auto check_derivation = [&](const std::string& derived,
                              const std::string& source) {
    auto d = datasets_.find(derived);
    auto s = datasets_.find(source);
    if (d == datasets_.end() || s == datasets_.end())
      return;
    std::vector<std::string> a, b;
    for (const ImageRecord& r : d->second.records)
      a.push_back(filename_of(r.image_path));
    for (const ImageRecord& r : s->second.records)
      b.push_back(filename_of(r.image_path));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b)
      throw ContractError("split hygiene: " + derived +
                          " does not derive image-for-image from " + source);
  };
  check_derivation("target_test_a", "clean_a_test");
  check_derivation("target_test_b", "clean_b_test");
  check_derivation("target_train_a", "clean_a_train");
  check_derivation("target_train_b", "clean_b_train");
  check_derivation("blur_train_a", "clean_a_train");

  // The blur-training mitigation must never see the target condition:
  // every record has to carry exactly the training-corruption tag.
  auto blur = datasets_.find("blur_train_a");
  if (blur != datasets_.end()) {
    const std::string expected =
        std::string("corrupted:") + cfg_.train_corruption.kind_name();
    for (const ImageRecord& r : blur->second.records)
      if (r.condition != expected)
        throw ContractError("split hygiene: blur_train_a record " +
                            r.image_path + " has condition '" + r.condition +
                            "', expected '" + expected + "'");
  }
}

BiasSummary summarize_bias(const std::vector<StageResult>& stages) {
  auto find = [&](const char* name) -> const StageResult* {
    for (const StageResult& s : stages)
      if (s.stage == name)
        return &s;
    return nullptr;
  };
  BiasSummary b;
  const StageResult* s1 = find("stage1");
  const StageResult* s2 = find("stage2");
  if (s1 && s2) {
    b.has_bias_gap = true;
    b.bias_gap = s1->report.map - s2->report.map;
    for (std::size_t c = 0; c < s1->report.ap.size(); ++c)
      b.per_class_delta.push_back(s1->report.ap[c] - s2->report.ap[c]);
  }
  if (!s2)
    return b;
  b.ratios_defined = s2->report.map > 0.0;
  if (const StageResult* s3 = find("stage3")) {
    b.has_stage3 = true;
    b.stage3_delta = s3->report.map - s2->report.map;
  }
  if (const StageResult* t1 = find("tech1")) {
    b.has_tech1 = true;
    b.tech1_delta = t1->report.map - s2->report.map;
    if (b.ratios_defined)
      b.tech1_ratio = t1->report.map / s2->report.map;
  }
  if (const StageResult* t2 = find("tech2")) {
    b.has_tech2 = true;
    b.tech2_delta = t2->report.map - s2->report.map;
    if (b.ratios_defined)
      b.tech2_ratio = t2->report.map / s2->report.map;
  }
  return b;
}

namespace {

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json j;
  j["label"] = r.label;
  j["classes"] = r.classes.names();
  j["ap"] = r.ap;
  j["zero_gt"] = r.zero_gt;
  j["map"] = r.map;
  j["num_images"] = r.num_images;
  j["gt_count"] = r.gt_count;
  j["det_count"] = r.det_count;
  j["model_id"] = r.model_id;
  j["dataset_id"] = r.dataset_id;
  j["iou_threshold"] = r.iou_threshold;
  j["method"] = ap_method_name(r.method);
  return j;
}

nlohmann::json bias_json(const BiasSummary& b) {
  nlohmann::json j;
  if (b.has_bias_gap) {
    j["bias_gap"] = b.bias_gap;
    j["per_class_delta"] = b.per_class_delta;
  }
  if (b.has_stage3)
    j["stage3_delta"] = b.stage3_delta;
  if (b.has_tech1) {
    j["tech1_delta"] = b.tech1_delta;
    if (b.ratios_defined)
      j["tech1_ratio"] = b.tech1_ratio;
    else
      j["tech1_ratio"] = "unbounded";
  }
  if (b.has_tech2) {
    j["tech2_delta"] = b.tech2_delta;
    if (b.ratios_defined)
      j["tech2_ratio"] = b.tech2_ratio;
    else
      j["tech2_ratio"] = "unbounded";
  }
  return j;
}

} // namespace

RunArtifacts Pipeline::run() {
  RunArtifacts out;
  out.out_dir = out_;

  const auto requested = [&](StageId id) {
    return std::find(cfg_.stages.begin(), cfg_.stages.end(), id) !=
           cfg_.stages.end();
  };

  // Dependency order; stage4 is self-contained, the rest build on the
  // A-family artifacts.
  if (requested(StageId::stage1))
    out.stages.push_back(run_stage1());
  if (requested(StageId::stage2))
    out.stages.push_back(run_stage2());
  if (requested(StageId::stage3))
    out.stages.push_back(run_stage3());
  if (requested(StageId::stage4)) {
    auto b = run_stage4();
    out.stages.insert(out.stages.end(), b.begin(), b.end());
  }
  if (requested(StageId::tech1))
    out.stages.push_back(run_technique1());
  if (requested(StageId::tech2))
    out.stages.push_back(run_technique2());

  assert_split_hygiene();
  out.bias = summarize_bias(out.stages);

  auto find = [&](const char* name) -> const StageResult* {
    for (const StageResult& s : out.stages)
      if (s.stage == name)
        return &s;
    return nullptr;
  };
  const StageResult* s1 = find("stage1");
  const StageResult* s2 = find("stage2");
  auto fail = [&](const std::string& msg) {
    out.bound_failures.push_back(msg);
  };
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  if (s1 && s1->report.map < cfg_.bounds.stage1_min_map)
    fail("stage1 mAP " + pct(s1->report.map) + " < " +
         pct(cfg_.bounds.stage1_min_map));
  if (s1 && s2 &&
      s2->report.map > cfg_.bounds.stage2_max_frac * s1->report.map)
    fail("stage2 mAP " + pct(s2->report.map) + " > " +
         pct(cfg_.bounds.stage2_max_frac) + " x stage1 mAP " +
         pct(s1->report.map));
  if (const StageResult* s3 = find("stage3"); s3 && s2)
    if (s3->report.map - s2->report.map < cfg_.bounds.stage3_min_vs_stage2)
      fail("stage3 mAP " + pct(s3->report.map) + " fell below stage2 mAP " +
           pct(s2->report.map) + " + " + pct(cfg_.bounds.stage3_min_vs_stage2));
  if (const StageResult* s1b = find("stage1_b")) {
    const StageResult* s2b = find("stage2_b");
    if (s2b && !(s1b->report.map > s2b->report.map))
      fail("family B lost the clean-over-corrupted ordering: " +
           pct(s1b->report.map) + " vs " + pct(s2b->report.map));
  }
  if (const StageResult* t1 = find("tech1"); t1 && s2)
    if (!(t1->report.map - s2->report.map > cfg_.bounds.tech1_min_gain))
      fail("tech1 mAP " + pct(t1->report.map) +
           " did not strictly improve on stage2 mAP " + pct(s2->report.map));
  if (const StageResult* t2 = find("tech2"); t2 && s2)
    if (t2->report.map < cfg_.bounds.tech2_min_ratio * s2->report.map)
      fail("tech2 mAP " + pct(t2->report.map) + " < " +
           pct(cfg_.bounds.tech2_min_ratio) + " x stage2 mAP " +
           pct(s2->report.map));

  // Table-1-style (bias identification) and Table-2-style (mitigation).
  std::vector<EvalReport> table1, table2;
  for (const char* n :
       {"stage1", "stage2", "stage3", "stage1_b", "stage2_b", "stage3_b"})
    if (const StageResult* s = find(n))
      table1.push_back(s->report);
  for (const char* n : {"stage2", "tech1", "tech2"})
    if (const StageResult* s = find(n))
      table2.push_back(s->report);
  write_text_file(tables_ / "table1.md",
                  render_report_table(table1, TableFormat::markdown));
  write_text_file(tables_ / "table1.csv",
                  render_report_table(table1, TableFormat::csv));
  write_text_file(tables_ / "table2.md",
                  render_report_table(table2, TableFormat::markdown));
  write_text_file(tables_ / "table2.csv",
                  render_report_table(table2, TableFormat::csv));

  nlohmann::json summary;
  summary["format"] = "wbh-summary v1";
  summary["config"] = dump_config(cfg_);
  summary["stages"] = nlohmann::json::array();
  for (const StageResult& s : out.stages) {
    nlohmann::json j;
    j["stage"] = s.stage;
    j["train_set"] = s.train_set;
    j["test_set"] = s.test_set;
    j["checkpoint"] = s.checkpoint;
    j["report"] = report_json(s.report);
    summary["stages"].push_back(j);
  }
  summary["bias"] = bias_json(out.bias);
  summary["bounds"]["pass"] = out.bounds_pass();
  summary["bounds"]["failures"] = out.bound_failures;
  write_text_file(out_ / "summary.json", summary.dump(2) + "\n");

  std::string timings;
  double total = 0.0;
  for (const StageResult& s : out.stages) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s\t%.3f\n", s.stage.c_str(), s.seconds);
    timings += buf;
    total += s.seconds;
  }
  {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "total\t%.3f\n", total);
    timings += buf;
  }
  write_text_file(out_ / "timings.txt", timings);

  // Artifact inventory: path, size, content hash.  The timing file is
  // excluded so everything listed is reproducible byte for byte.
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(out_))
    if (e.is_regular_file()) {
      const auto rel = std::filesystem::relative(e.path(), out_);
      if (rel == "timings.txt" || rel == "artifacts.txt")
        continue;
      files.push_back(rel);
    }
  std::sort(files.begin(), files.end());
  std::string inventory;
  for (const auto& rel : files) {
    const std::string bytes = read_text_file(out_ / rel);
    inventory += rel.generic_string() + "\t" + std::to_string(bytes.size()) +
                 "\t" + hex16(hash64(bytes)) + "\n";
  }
  write_text_file(out_ / "artifacts.txt", inventory);
  return out;
}

RunArtifacts run_experiment(const ExperimentConfig& cfg) {
  Pipeline p(cfg);
  return p.run();
}

} // namespace wbh

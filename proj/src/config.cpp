#include "wbh/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "wbh/error.hpp"
#include "wbh/rng.hpp"

namespace wbh {

const char* stage_name(StageId id) {
  switch (id) {
  case StageId::stage1:
    return "stage1";
  case StageId::stage2:
    return "stage2";
  case StageId::stage3:
    return "stage3";
  case StageId::stage4:
    return "stage4";
  case StageId::tech1:
    return "tech1";
  case StageId::tech2:
    return "tech2";
  }
  throw ContractError("stage_name: bad id");
}

StageId stage_from_name(const std::string& name) {
  for (StageId id : {StageId::stage1, StageId::stage2, StageId::stage3,
                     StageId::stage4, StageId::tech1, StageId::tech2})
    if (name == stage_name(id))
      return id;
  throw ConfigError("unknown stage '" + name + "'");
}

void ExperimentConfig::apply_master_seed(std::uint64_t master) {
  seed = master;
  scene_a.seed = hash_mix(master, hash64("scene-a"));
  scene_b.seed = hash_mix(master, hash64("scene-b"));
  for (CorruptionSpec& s : target_corruption)
    s.seed = hash_mix(master, hash64("target-corruption"));
  train_corruption.seed = hash_mix(master, hash64("train-corruption"));
  train.seed = hash_mix(master, hash64("train"));
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig cfg;
  cfg.stages = {StageId::stage1, StageId::stage2, StageId::stage3,
                StageId::stage4, StageId::tech1, StageId::tech2};
  cfg.scene_a = SceneSpec::family_a();
  cfg.scene_b = SceneSpec::family_b();

  // Target condition: light haze plus a sandstorm pass. Calibrated so the
  // clean-trained detector degrades hard while blur-trained features still
  // transfer (the tint-plus-blur structure of sand is close to the training
  // corruption below, the haze is not).
  CorruptionSpec fog;
  fog.kind = CorruptionSpec::Kind::fog;
  fog.fog_density = 0.25;
  CorruptionSpec sand;
  sand.kind = CorruptionSpec::Kind::sand;
  sand.sand_sigma = 3.0;
  cfg.target_corruption = {fog, sand};

  // Effective blur of the two-pass training corruption (sqrt(1.5^2 + 2.5^2)
  // ~= 2.9) matches the target's sand blur.
  cfg.train_corruption.kind = CorruptionSpec::Kind::double_gaussian;
  cfg.train_corruption.sigma1 = 1.5;
  cfg.train_corruption.sigma2 = 2.5;

  cfg.train.lr = 0.05;
  cfg.train.batch_size = 16;
  cfg.train.steps = 320;
  cfg.fine_tune_lr = cfg.train.lr / 10.0;
  cfg.fine_tune_steps = 120;

  cfg.apply_master_seed(cfg.seed);
  return cfg;
}

void ExperimentConfig::validate() const {
  if (train_count < 1 || test_count < 1)
    throw ConfigError("config: train_count and test_count must be >= 1");
  if (!(mix_fraction >= 0.0 && mix_fraction <= 1.0))
    throw ConfigError("config: mix_fraction must be in [0,1]");
  if (stages.empty())
    throw ConfigError("config: stage list is empty");
  for (std::size_t i = 0; i < stages.size(); ++i)
    for (std::size_t j = i + 1; j < stages.size(); ++j)
      if (stages[i] == stages[j])
        throw ConfigError(std::string("config: stage '") +
                          stage_name(stages[i]) + "' listed twice");
  if (out_dir.empty())
    throw ConfigError("config: out_dir is empty");
  scene_a.validate();
  scene_b.validate();
  if (scene_a.image_size != scene_b.image_size)
    throw ConfigError("config: scene families must share an image size");
  if (scene_a.image_size % 8 != 0)
    throw ConfigError("config: image size must be a multiple of 8");
  if (target_corruption.empty())
    throw ConfigError("config: target_corruption chain is empty");
  for (const CorruptionSpec& s : target_corruption)
    s.validate();
  // The config file stores one shared parameter block per chain, so a kind
  // appearing twice (with possibly different parameters) could not be
  // written back faithfully.
  for (std::size_t i = 0; i < target_corruption.size(); ++i)
    for (std::size_t j = i + 1; j < target_corruption.size(); ++j)
      if (target_corruption[i].kind == target_corruption[j].kind)
        throw ConfigError(std::string("config: target_corruption lists '") +
                          target_corruption[i].kind_name() + "' twice");
  train_corruption.validate();
  train.validate();
  if (!(fine_tune_lr >= 0.0))
    throw ConfigError("config: fine_tune_lr must be >= 0");
  if (fine_tune_steps < 0)
    throw ConfigError("config: fine_tune_steps must be >= 0");
  eval.validate();
  if (!(bounds.stage1_min_map >= 0.0))
    throw ConfigError("config: stage1_min_map must be >= 0");
  if (!(bounds.stage2_max_frac > 0.0 && bounds.stage2_max_frac <= 1.0))
    throw ConfigError("config: stage2_max_frac must be in (0,1]");
  if (!(bounds.tech2_min_ratio > 0.0))
    throw ConfigError("config: tech2_min_ratio must be > 0");
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{})
    throw ContractError("fmt_double: value does not format");
  return std::string(buf, end);
}

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos)
    return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, ','))
    parts.push_back(trim(cur));
  return parts;
}

struct RawValue {
  std::string value;
  int line = 0;
  bool used = false;
};

// (section, key) -> value. Duplicate keys are rejected at lex time.
using RawConfig = std::map<std::pair<std::string, std::string>, RawValue>;

RawConfig lex_config(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool version_seen = false;
  std::string section;
  RawConfig raw;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';')
      continue;
    if (!version_seen) {
      if (t != "wbh-config v1")
        throw VersionError("config: first line must be 'wbh-config v1'");
      version_seen = true;
      continue;
    }
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ParseError("config line " + std::to_string(line_no) +
                             ": unterminated section header",
                         0);
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw ParseError("config line " + std::to_string(line_no) +
                             ": empty section name",
                         0);
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) +
                           ": expected key = value",
                       0);
    if (section.empty())
      throw ParseError("config line " + std::to_string(line_no) +
                           ": key outside any [section]",
                       0);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ParseError("config line " + std::to_string(line_no) +
                           ": empty key",
                       0);
    auto [it, inserted] =
        raw.emplace(std::make_pair(section, key), RawValue{value, line_no});
    if (!inserted)
      throw ParseError("config line " + std::to_string(line_no) +
                           ": duplicate key '" + key + "' in [" + section +
                           "]",
                       0);
  }
  if (!version_seen)
    throw VersionError("config: missing 'wbh-config v1' header");
  return raw;
}

class Extractor {
public:
  explicit Extractor(RawConfig& raw) : raw_(raw) {}

  const std::string* find(const std::string& sec, const std::string& key) {
    auto it = raw_.find({sec, key});
    if (it == raw_.end())
      return nullptr;
    it->second.used = true;
    return &it->second.value;
  }

  void get(const std::string& sec, const std::string& key, double& out) {
    if (const std::string* v = find(sec, key))
      out = to_double(sec, key, *v);
  }
  void get(const std::string& sec, const std::string& key, int& out) {
    if (const std::string* v = find(sec, key))
      out = int(to_ll(sec, key, *v));
  }
  void get(const std::string& sec, const std::string& key,
           std::uint64_t& out) {
    if (const std::string* v = find(sec, key))
      out = to_u64(sec, key, *v);
  }
  void get(const std::string& sec, const std::string& key, bool& out) {
    if (const std::string* v = find(sec, key)) {
      if (*v == "true" || *v == "1")
        out = true;
      else if (*v == "false" || *v == "0")
        out = false;
      else
        throw ConfigError(where(sec, key) + ": expected true or false");
    }
  }
  void get(const std::string& sec, const std::string& key, std::string& out) {
    if (const std::string* v = find(sec, key))
      out = *v;
  }
  template <std::size_t N>
  void get_rgb(const std::string& sec, const std::string& key,
               std::array<std::uint8_t, N>& out) {
    if (const std::string* v = find(sec, key)) {
      const auto parts = split_list(*v);
      if (parts.size() != N)
        throw ConfigError(where(sec, key) + ": expected " +
                          std::to_string(N) + " comma-separated values");
      for (std::size_t i = 0; i < N; ++i) {
        const long long x = to_ll(sec, key, parts[i]);
        if (x < 0 || x > 255)
          throw ConfigError(where(sec, key) + ": values must be 0..255");
        out[i] = std::uint8_t(x);
      }
    }
  }
  template <std::size_t N>
  void get_ints(const std::string& sec, const std::string& key,
                std::array<int, N>& out) {
    if (const std::string* v = find(sec, key)) {
      const auto parts = split_list(*v);
      if (parts.size() != N)
        throw ConfigError(where(sec, key) + ": expected " +
                          std::to_string(N) + " comma-separated values");
      for (std::size_t i = 0; i < N; ++i)
        out[i] = int(to_ll(sec, key, parts[i]));
    }
  }
  void get_triple(const std::string& sec, const std::string& key,
                  double (&out)[3]) {
    if (const std::string* v = find(sec, key)) {
      const auto parts = split_list(*v);
      if (parts.size() != 3)
        throw ConfigError(where(sec, key) +
                          ": expected 3 comma-separated values");
      for (std::size_t i = 0; i < 3; ++i)
        out[i] = to_double(sec, key, parts[i]);
    }
  }

  void reject_unused() const {
    for (const auto& [sk, rv] : raw_)
      if (!rv.used)
        throw ConfigError("config line " + std::to_string(rv.line) +
                          ": unknown key '" + sk.second + "' in [" +
                          sk.first + "]");
  }

private:
  static std::string where(const std::string& sec, const std::string& key) {
    return "config [" + sec + "] " + key;
  }
  static double to_double(const std::string& sec, const std::string& key,
                          const std::string& s) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
      throw ConfigError(where(sec, key) + ": bad number '" + s + "'");
    return v;
  }
  static long long to_ll(const std::string& sec, const std::string& key,
                         const std::string& s) {
    long long v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
      throw ConfigError(where(sec, key) + ": bad integer '" + s + "'");
    return v;
  }
  static std::uint64_t to_u64(const std::string& sec, const std::string& key,
                              const std::string& s) {
    std::uint64_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
      throw ConfigError(where(sec, key) + ": bad integer '" + s + "'");
    return v;
  }

  RawConfig& raw_;
};

void apply_scene(Extractor& ex, const std::string& sec, SceneSpec& s) {
  ex.get(sec, "image_size", s.image_size);
  ex.get(sec, "objects_min", s.objects_min);
  ex.get(sec, "objects_max", s.objects_max);
  ex.get_rgb(sec, "sky", s.sky);
  ex.get_rgb(sec, "road", s.road);
  ex.get(sec, "horizon", s.horizon);
  ex.get(sec, "noise_amp", s.noise_amp);
  ex.get_ints(sec, "scale_min", s.scale_min);
  ex.get_ints(sec, "scale_max", s.scale_max);
  ex.get(sec, "seed", s.seed);
}

void apply_corruption(Extractor& ex, const std::string& sec,
                      std::vector<CorruptionSpec>& chain) {
  if (const std::string* v = ex.find(sec, "kinds")) {
    chain.clear();
    for (const std::string& name : split_list(*v)) {
      CorruptionSpec s;
      s.kind = CorruptionSpec::kind_from_name(name);
      chain.push_back(s);
    }
    if (chain.empty())
      throw ConfigError("config [" + sec + "] kinds: empty list");
  }
  // Shared parameter block: applied to every kind in the chain (each kind
  // only reads its own fields).
  for (CorruptionSpec& s : chain) {
    ex.get(sec, "sigma1", s.sigma1);
    ex.get(sec, "sigma2", s.sigma2);
    ex.get(sec, "fog_density", s.fog_density);
    ex.get(sec, "airlight", s.airlight);
    ex.get(sec, "streak_count", s.streak_count);
    ex.get(sec, "streak_length", s.streak_length);
    ex.get(sec, "streak_alpha", s.streak_alpha);
    ex.get(sec, "flake_count", s.flake_count);
    ex.get(sec, "flake_radius", s.flake_radius);
    ex.get_triple(sec, "tint", s.tint);
    ex.get(sec, "sand_sigma", s.sand_sigma);
    ex.get(sec, "seed", s.seed);
  }
}

std::string join_kinds(std::span<const CorruptionSpec> chain) {
  std::string out;
  for (const CorruptionSpec& s : chain) {
    if (!out.empty())
      out += ",";
    out += s.kind_name();
  }
  return out;
}

void dump_corruption(std::string& out, const std::string& sec,
                     std::span<const CorruptionSpec> chain) {
  // One shared parameter block describes the whole chain, so each kind
  // contributes the fields only it reads. The parser applies every key to
  // every element and each renderer ignores foreign fields, so this merged
  // view reloads to the same chain as long as no kind repeats
  // (ExperimentConfig::validate enforces that).
  CorruptionSpec s = chain.front();
  for (const CorruptionSpec& e : chain) {
    switch (e.kind) {
    case CorruptionSpec::Kind::double_gaussian:
      s.sigma1 = e.sigma1;
      s.sigma2 = e.sigma2;
      break;
    case CorruptionSpec::Kind::fog:
      s.fog_density = e.fog_density;
      s.airlight = e.airlight;
      break;
    case CorruptionSpec::Kind::rain:
      s.streak_count = e.streak_count;
      s.streak_length = e.streak_length;
      s.streak_alpha = e.streak_alpha;
      break;
    case CorruptionSpec::Kind::snow:
      s.flake_count = e.flake_count;
      s.flake_radius = e.flake_radius;
      break;
    case CorruptionSpec::Kind::sand:
      s.tint[0] = e.tint[0];
      s.tint[1] = e.tint[1];
      s.tint[2] = e.tint[2];
      s.sand_sigma = e.sand_sigma;
      break;
    }
  }
  out += "[" + sec + "]\n";
  out += "kinds = " + join_kinds(chain) + "\n";
  out += "sigma1 = " + fmt_double(s.sigma1) + "\n";
  out += "sigma2 = " + fmt_double(s.sigma2) + "\n";
  out += "fog_density = " + fmt_double(s.fog_density) + "\n";
  out += "airlight = " + fmt_double(s.airlight) + "\n";
  out += "streak_count = " + std::to_string(s.streak_count) + "\n";
  out += "streak_length = " + std::to_string(s.streak_length) + "\n";
  out += "streak_alpha = " + fmt_double(s.streak_alpha) + "\n";
  out += "flake_count = " + std::to_string(s.flake_count) + "\n";
  out += "flake_radius = " + std::to_string(s.flake_radius) + "\n";
  out += "tint = " + fmt_double(s.tint[0]) + "," + fmt_double(s.tint[1]) +
         "," + fmt_double(s.tint[2]) + "\n";
  out += "sand_sigma = " + fmt_double(s.sand_sigma) + "\n";
  out += "seed = " + std::to_string(s.seed) + "\n\n";
}

void dump_scene(std::string& out, const std::string& sec,
                const SceneSpec& s) {
  out += "[" + sec + "]\n";
  out += "image_size = " + std::to_string(s.image_size) + "\n";
  out += "objects_min = " + std::to_string(s.objects_min) + "\n";
  out += "objects_max = " + std::to_string(s.objects_max) + "\n";
  out += "sky = " + std::to_string(s.sky[0]) + "," + std::to_string(s.sky[1]) +
         "," + std::to_string(s.sky[2]) + "\n";
  out += "road = " + std::to_string(s.road[0]) + "," +
         std::to_string(s.road[1]) + "," + std::to_string(s.road[2]) + "\n";
  out += "horizon = " + std::to_string(s.horizon) + "\n";
  out += "noise_amp = " + std::to_string(s.noise_amp) + "\n";
  auto join4 = [](const std::array<int, 4>& a) {
    return std::to_string(a[0]) + "," + std::to_string(a[1]) + "," +
           std::to_string(a[2]) + "," + std::to_string(a[3]);
  };
  out += "scale_min = " + join4(s.scale_min) + "\n";
  out += "scale_max = " + join4(s.scale_max) + "\n";
  out += "seed = " + std::to_string(s.seed) + "\n\n";
}

} // namespace

std::string dump_config(const ExperimentConfig& cfg) {
  std::string out = "wbh-config v1\n\n";
  out += "[experiment]\n";
  out += "seed = " + std::to_string(cfg.seed) + "\n";
  out += "train_count = " + std::to_string(cfg.train_count) + "\n";
  out += "test_count = " + std::to_string(cfg.test_count) + "\n";
  out += "mix_fraction = " + fmt_double(cfg.mix_fraction) + "\n";
  std::string stages;
  for (StageId id : cfg.stages) {
    if (!stages.empty())
      stages += ",";
    stages += stage_name(id);
  }
  out += "stages = " + stages + "\n";
  out += "out_dir = " + cfg.out_dir + "\n";
  out += std::string("cache = ") + (cfg.cache ? "true" : "false") + "\n\n";

  dump_scene(out, "scene_a", cfg.scene_a);
  dump_scene(out, "scene_b", cfg.scene_b);
  dump_corruption(out, "target_corruption", cfg.target_corruption);
  dump_corruption(out, "train_corruption", {&cfg.train_corruption, 1});

  out += "[train]\n";
  out += "lr = " + fmt_double(cfg.train.lr) + "\n";
  out += "batch_size = " + std::to_string(cfg.train.batch_size) + "\n";
  out += "steps = " + std::to_string(cfg.train.steps) + "\n";
  out += "seed = " + std::to_string(cfg.train.seed) + "\n";
  out += "alpha = " + fmt_double(cfg.train.loss.alpha) + "\n";
  out += "neg_pos_ratio = " + fmt_double(cfg.train.loss.neg_pos_ratio) + "\n";
  out += "divergence_limit = " + fmt_double(cfg.train.divergence_limit) +
         "\n";
  out += "fine_tune_lr = " + fmt_double(cfg.fine_tune_lr) + "\n";
  out += "fine_tune_steps = " + std::to_string(cfg.fine_tune_steps) + "\n\n";

  out += "[eval]\n";
  out += "iou_threshold = " + fmt_double(cfg.eval.iou_threshold) + "\n";
  out += std::string("method = ") + ap_method_name(cfg.eval.method) + "\n";
  out += "score_threshold = " + fmt_double(cfg.eval.predict.score_threshold) +
         "\n";
  out += "nms_iou = " + fmt_double(cfg.eval.predict.nms_iou) + "\n";
  out += "max_detections = " +
         std::to_string(cfg.eval.predict.max_detections) + "\n\n";

  out += "[bounds]\n";
  out += "stage1_min_map = " + fmt_double(cfg.bounds.stage1_min_map) + "\n";
  out += "stage2_max_frac = " + fmt_double(cfg.bounds.stage2_max_frac) + "\n";
  out += "stage3_min_vs_stage2 = " +
         fmt_double(cfg.bounds.stage3_min_vs_stage2) + "\n";
  out += "tech1_min_gain = " + fmt_double(cfg.bounds.tech1_min_gain) + "\n";
  out += "tech2_min_ratio = " + fmt_double(cfg.bounds.tech2_min_ratio) + "\n";
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  RawConfig raw = lex_config(text);
  Extractor ex(raw);

  // The master seed re-derives the sub-seeds, so read it before anything
  // else; explicit per-section seeds still win afterwards.
  ExperimentConfig cfg = ExperimentConfig::defaults();
  {
    std::uint64_t master = cfg.seed;
    if (const std::string* v = ex.find("experiment", "seed")) {
      std::uint64_t parsed = 0;
      auto r = std::from_chars(v->data(), v->data() + v->size(), parsed);
      if (r.ec != std::errc{} || r.ptr != v->data() + v->size())
        throw ConfigError("config [experiment] seed: bad integer '" + *v +
                          "'");
      master = parsed;
    }
    cfg.apply_master_seed(master);
  }

  ex.get("experiment", "train_count", cfg.train_count);
  ex.get("experiment", "test_count", cfg.test_count);
  ex.get("experiment", "mix_fraction", cfg.mix_fraction);
  if (const std::string* v = ex.find("experiment", "stages")) {
    cfg.stages.clear();
    for (const std::string& name : split_list(*v))
      cfg.stages.push_back(stage_from_name(name));
  }
  ex.get("experiment", "out_dir", cfg.out_dir);
  ex.get("experiment", "cache", cfg.cache);

  apply_scene(ex, "scene_a", cfg.scene_a);
  apply_scene(ex, "scene_b", cfg.scene_b);
  apply_corruption(ex, "target_corruption", cfg.target_corruption);
  {
    std::vector<CorruptionSpec> single = {cfg.train_corruption};
    apply_corruption(ex, "train_corruption", single);
    if (single.size() != 1)
      throw ConfigError(
          "config [train_corruption]: exactly one kind is required");
    cfg.train_corruption = single.front();
  }

  ex.get("train", "lr", cfg.train.lr);
  ex.get("train", "batch_size", cfg.train.batch_size);
  ex.get("train", "steps", cfg.train.steps);
  ex.get("train", "seed", cfg.train.seed);
  ex.get("train", "alpha", cfg.train.loss.alpha);
  ex.get("train", "neg_pos_ratio", cfg.train.loss.neg_pos_ratio);
  ex.get("train", "divergence_limit", cfg.train.divergence_limit);
  ex.get("train", "fine_tune_lr", cfg.fine_tune_lr);
  ex.get("train", "fine_tune_steps", cfg.fine_tune_steps);

  ex.get("eval", "iou_threshold", cfg.eval.iou_threshold);
  if (const std::string* v = ex.find("eval", "method"))
    cfg.eval.method = ap_method_from_name(*v);
  ex.get("eval", "score_threshold", cfg.eval.predict.score_threshold);
  ex.get("eval", "nms_iou", cfg.eval.predict.nms_iou);
  ex.get("eval", "max_detections", cfg.eval.predict.max_detections);

  ex.get("bounds", "stage1_min_map", cfg.bounds.stage1_min_map);
  ex.get("bounds", "stage2_max_frac", cfg.bounds.stage2_max_frac);
  ex.get("bounds", "stage3_min_vs_stage2", cfg.bounds.stage3_min_vs_stage2);
  ex.get("bounds", "tech1_min_gain", cfg.bounds.tech1_min_gain);
  ex.get("bounds", "tech2_min_ratio", cfg.bounds.tech2_min_ratio);

  ex.reject_unused();
  cfg.validate();
  return cfg;
}

ExperimentConfig read_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw IoError("read_config: cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

} // namespace wbh

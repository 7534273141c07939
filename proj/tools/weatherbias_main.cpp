// Command-line front end for the weather-bias benchmark harness.
//
//   weatherbias generate  synthesize a labeled clean-scene dataset
//   weatherbias corrupt   apply a configured corruption to a dataset
//   weatherbias train     train a detector on one manifest
//   weatherbias eval      score a model (or a detection dump) on a manifest
//   weatherbias run       execute the bias identification/mitigation runbook
//   weatherbias report    re-print the tables and verdict of a finished run
//
// `run` exits 0 only when every requested stage passed its configured
// bounds; all verbs exit 2 on input/config errors.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wbh/config.hpp"
#include "wbh/corruption.hpp"
#include "wbh/error.hpp"
#include "wbh/eval.hpp"
#include "wbh/manifest.hpp"
#include "wbh/network.hpp"
#include "wbh/pipeline.hpp"
#include "wbh/rng.hpp"
#include "wbh/scenegen.hpp"
#include "wbh/train.hpp"

namespace {

wbh::ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? wbh::ExperimentConfig::defaults()
                      : wbh::read_config(path);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f)
    throw wbh::IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int cmd_generate(const std::string& config_path, const std::string& family,
                 const std::string& split, int count, std::uint64_t seed,
                 bool seed_set, const std::string& out) {
  wbh::ExperimentConfig cfg = load_config(config_path);
  wbh::SceneSpec spec = family == "b" ? cfg.scene_b : cfg.scene_a;
  if (seed_set)
    spec.seed = seed;
  if (split != "none") // same derivation the run pipeline uses
    spec.seed = wbh::hash_mix(spec.seed, wbh::hash64(split));
  if (count <= 0)
    count = split == "test" ? cfg.test_count : cfg.train_count;
  wbh::DatasetManifest m = wbh::generate_dataset(spec, count, out);
  std::printf("wrote %zu images + manifest to %s\n", m.records.size(),
              out.c_str());
  return 0;
}

int cmd_corrupt(const std::string& config_path, const std::string& in,
                const std::string& which, const std::string& out) {
  wbh::ExperimentConfig cfg = load_config(config_path);
  wbh::DatasetManifest src = wbh::read_manifest(in);
  const std::filesystem::path base =
      std::filesystem::path(in).parent_path();
  wbh::DatasetManifest dst =
      which == "train"
          ? wbh::corrupt_dataset(src, base, cfg.train_corruption, out)
          : wbh::corrupt_dataset(src, base, cfg.target_corruption, out);
  wbh::write_manifest(dst, std::filesystem::path(out) / "manifest.txt");
  std::printf("corrupted %zu images (%s) into %s\n", dst.records.size(),
              which.c_str(), out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data,
              const std::string& out, int steps, double lr,
              std::uint64_t seed, bool seed_set) {
  wbh::ExperimentConfig cfg = load_config(config_path);
  wbh::DatasetManifest m = wbh::read_manifest(data);
  if (m.records.empty())
    throw wbh::ContractError("training manifest has no records");

  wbh::TrainConfig tc = cfg.train;
  if (steps >= 0)
    tc.steps = steps;
  if (lr >= 0.0)
    tc.lr = lr;
  if (seed_set)
    tc.seed = seed;

  wbh::Architecture arch;
  arch.input_size = m.records.front().width;
  wbh::ModelState model =
      wbh::init_model(arch, wbh::AnchorConfig{.grid = arch.grid()},
                      m.classes, wbh::hash_mix(tc.seed, wbh::hash64("init")));
  const std::filesystem::path base =
      std::filesystem::path(data).parent_path();
  wbh::TrainResult res = wbh::train(model, wbh::load_dataset(m, base), tc);
  wbh::save_model(model, out);
  std::printf("trained %d steps (final loss %.4f), checkpoint %s\n",
              tc.steps, res.loss_trace.empty() ? 0.0 : res.loss_trace.back(),
              out.c_str());
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& model_path,
             const std::string& dets_path, const std::string& data,
             const std::string& dump_out) {
  wbh::ExperimentConfig cfg = load_config(config_path);
  wbh::DatasetManifest m = wbh::read_manifest(data);
  const std::filesystem::path base =
      std::filesystem::path(data).parent_path();

  wbh::EvalReport rep;
  if (!dets_path.empty()) {
    rep = wbh::evaluate_dump(dets_path, m, cfg.eval);
    rep.label = std::filesystem::path(dets_path).stem().string();
  } else {
    wbh::ModelState model = wbh::load_model(model_path);
    wbh::LoadedDataset ds = wbh::load_dataset(m, base);
    if (!dump_out.empty()) {
      std::vector<std::vector<wbh::Detection>> dets;
      std::vector<std::vector<wbh::Annotation>> gts;
      for (const wbh::LoadedSample& s : ds.samples) {
        dets.push_back(wbh::predict(model, s.image, cfg.eval.predict));
        gts.push_back(s.annotations);
      }
      wbh::write_detections(m, dets, dump_out);
      rep = wbh::evaluate_detections(dets, gts, m.classes, cfg.eval);
    } else {
      rep = wbh::evaluate_model(model, ds, cfg.eval);
    }
    rep.label = std::filesystem::path(model_path).stem().string();
    rep.model_id = model_path;
  }
  rep.dataset_id = data;
  std::fputs(
      wbh::render_report_table({&rep, 1}, wbh::TableFormat::markdown).c_str(),
      stdout);
  return 0;
}

int cmd_run(const std::string& config_path, std::uint64_t seed, bool seed_set,
            const std::string& stages, const std::string& out,
            bool no_cache) {
  wbh::ExperimentConfig cfg = load_config(config_path);
  if (seed_set)
    cfg.apply_master_seed(seed);
  if (!stages.empty()) {
    cfg.stages.clear();
    std::stringstream ss(stages);
    std::string name;
    while (std::getline(ss, name, ','))
      cfg.stages.push_back(wbh::stage_from_name(name));
  }
  if (!out.empty())
    cfg.out_dir = out;
  if (no_cache)
    cfg.cache = false;

  wbh::RunArtifacts art = wbh::run_experiment(cfg);
  for (const wbh::StageResult& s : art.stages)
    std::printf("%-10s mAP %6.2f  (train=%s test=%s)\n", s.stage.c_str(),
                s.report.map, s.train_set.c_str(), s.test_set.c_str());
  if (art.bias.has_bias_gap)
    std::printf("bias gap   %6.2f\n", art.bias.bias_gap);
  for (const std::string& f : art.bound_failures)
    std::printf("BOUND FAILED: %s\n", f.c_str());
  std::printf("%s  (artifacts in %s)\n",
              art.bounds_pass() ? "all bounds passed" : "bounds FAILED",
              art.out_dir.string().c_str());
  return art.bounds_pass() ? 0 : 1;
}

int cmd_report(const std::string& run_dir) {
  const std::filesystem::path dir(run_dir);
  for (const char* table : {"tables/table1.md", "tables/table2.md"}) {
    const auto p = dir / table;
    if (std::filesystem::exists(p)) {
      std::printf("== %s ==\n", table);
      std::fputs(slurp(p).c_str(), stdout);
      std::printf("\n");
    }
  }
  const nlohmann::json summary =
      nlohmann::json::parse(slurp(dir / "summary.json"));
  if (summary.contains("bias"))
    std::printf("bias: %s\n", summary["bias"].dump().c_str());
  const bool pass = summary["bounds"]["pass"].get<bool>();
  std::printf("bounds: %s\n", pass ? "pass" : "FAIL");
  for (const auto& f : summary["bounds"]["failures"])
    std::printf("  %s\n", f.get<std::string>().c_str());
  return pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"weather-bias detection benchmark harness"};
  app.require_subcommand(1);

  std::string config_path, family = "a", split = "none", out, in, which =
                                                                    "target";
  std::string model_path, dets_path, data, dump_out, stages, run_dir;
  int count = 0, steps = -1;
  double lr = -1.0;
  std::uint64_t seed = 0;
  bool no_cache = false;

  auto* gen = app.add_subcommand("generate", "synthesize a clean dataset");
  gen->add_option("--config", config_path, "config file (defaults built in)");
  gen->add_option("--family", family, "scene family: a or b")
      ->check(CLI::IsMember({"a", "b"}));
  gen->add_option("--split", split, "derive the train/test sub-seed")
      ->check(CLI::IsMember({"train", "test", "none"}));
  gen->add_option("--count", count, "number of images (default from config)");
  auto* gen_seed = gen->add_option("--seed", seed, "scene seed override");
  gen->add_option("--out", out, "output directory")->required();

  auto* cor = app.add_subcommand("corrupt", "corrupt an existing dataset");
  cor->add_option("--config", config_path, "config file");
  cor->add_option("--in", in, "input manifest")->required();
  cor->add_option("--which", which, "corruption to apply: target or train")
      ->check(CLI::IsMember({"target", "train"}));
  cor->add_option("--out", out, "output directory")->required();

  auto* trn = app.add_subcommand("train", "train a detector");
  trn->add_option("--config", config_path, "config file");
  trn->add_option("--data", data, "training manifest")->required();
  trn->add_option("--out", out, "checkpoint path")->required();
  trn->add_option("--steps", steps, "SGD steps override");
  trn->add_option("--lr", lr, "learning-rate override");
  auto* trn_seed = trn->add_option("--seed", seed, "training seed override");

  auto* evl = app.add_subcommand("eval", "evaluate a model or dump");
  evl->add_option("--config", config_path, "config file");
  evl->add_option("--model", model_path, "checkpoint to evaluate");
  evl->add_option("--dets", dets_path, "detection dump to score instead");
  evl->add_option("--data", data, "test manifest")->required();
  evl->add_option("--dump", dump_out, "also write detections to this file");

  auto* run = app.add_subcommand("run", "run the full procedure");
  run->add_option("--config", config_path, "config file");
  auto* run_seed = run->add_option("--seed", seed, "master seed override");
  run->add_option("--stages", stages, "comma-separated stage list");
  run->add_option("--out", out, "output directory override");
  run->add_flag("--no-cache", no_cache, "rebuild everything from scratch");

  auto* rep = app.add_subcommand("report", "print a finished run's verdict");
  rep->add_option("--run", run_dir, "run output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_generate(config_path, family, split, count, seed,
                          gen_seed->count() > 0, out);
    if (cor->parsed())
      return cmd_corrupt(config_path, in, which, out);
    if (trn->parsed())
      return cmd_train(config_path, data, out, steps, lr, seed,
                       trn_seed->count() > 0);
    if (evl->parsed()) {
      if (model_path.empty() == dets_path.empty())
        throw wbh::ConfigError("pass exactly one of --model / --dets");
      return cmd_eval(config_path, model_path, dets_path, data, dump_out);
    }
    if (run->parsed())
      return cmd_run(config_path, seed, run_seed->count() > 0, stages, out,
                     no_cache);
    if (rep->parsed())
      return cmd_report(run_dir);
  } catch (const wbh::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

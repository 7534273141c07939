#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "wbh/anchors.hpp"
#include "wbh/error.hpp"
#include "wbh/loss.hpp"
#include "wbh/network.hpp"
#include "wbh/predict.hpp"
#include "wbh/rng.hpp"
#include "wbh/scenegen.hpp"
#include "wbh/train.hpp"

#include "oracles.hpp"

using namespace wbh;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::path("scratch") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Small model used wherever full 64x64 forward passes would be waste.
ModelState tiny_model(std::uint64_t seed) {
  Architecture arch;
  arch.input_size = 16;
  arch.stage_channels = {4, 6, 6};
  AnchorConfig acfg;
  acfg.grid = arch.grid();
  return init_model(arch, acfg, ClassSet::canonical(), seed);
}

LoadedSample random_sample(Rng& rng, int size, int n_objects) {
  LoadedSample s;
  s.image = Image::create(size, size);
  for (double& v : s.image.pixels)
    v = rng.next_double();
  for (int i = 0; i < n_objects; ++i) {
    const double x0 = rng.uniform(0.0, size * 0.6);
    const double y0 = rng.uniform(0.0, size * 0.6);
    Annotation a;
    a.bbox = BBox{x0, y0, x0 + rng.uniform(3.0, size - x0),
                  y0 + rng.uniform(3.0, size - y0)};
    a.class_id = rng.uniform_int(0, 3);
    s.annotations.push_back(a);
  }
  return s;
}

} // namespace

TEST_CASE("anchor generation: count, geometry, clipping") {
  AnchorConfig cfg;
  const auto anchors = generate_anchors(cfg, 64);
  REQUIRE(anchors.size() == 192); // 8 x 8 x 3

  // Anchors are ordered row-major over cells, then by shape.  A center
  // cell's square scale-0.20 anchor is 12.8 px wide before clipping.
  const std::size_t cell_3_3 = (3 * 8 + 3) * cfg.shapes.size();
  const BBox& a = anchors[cell_3_3];
  CHECK(a.width() == doctest::Approx(12.8).epsilon(1e-12));
  CHECK(a.height() == doctest::Approx(12.8).epsilon(1e-12));
  CHECK(a.center_x() == doctest::Approx(3.5 * 8.0).epsilon(1e-12));

  for (const BBox& b : anchors) {
    CHECK(b.xmin >= 0.0);
    CHECK(b.ymin >= 0.0);
    CHECK(b.xmax <= 64.0);
    CHECK(b.ymax <= 64.0);
    CHECK(b.valid());
  }
}

TEST_CASE("anchor matching: exact hit, empty set, low-overlap bipartite") {
  AnchorConfig cfg;
  const auto anchors = generate_anchors(cfg, 64);

  // A ground truth identical to one anchor claims exactly that anchor.
  std::size_t target = 100;
  std::vector<Annotation> gts = {Annotation{anchors[target], 2, false}};
  MatchAssignment m = match_anchors(anchors, gts, cfg.pos_iou);
  CHECK(m.positives >= 1);
  CHECK(m.gt_index[target] == 0);
  CHECK(m.label[target] == 2);

  m = match_anchors(anchors, {}, cfg.pos_iou);
  CHECK(m.positives == 0);
  for (int lbl : m.label)
    CHECK(lbl == -1);

  // A tiny corner box overlaps every anchor below the threshold but is
  // still claimed by its best anchor through the bipartite step.
  std::vector<Annotation> small = {
      Annotation{BBox{0.0, 0.0, 3.0, 3.0}, 1, false}};
  double best_iou = 0.0;
  for (const BBox& a : anchors)
    best_iou = std::max(best_iou, iou(a, small[0].bbox));
  REQUIRE(best_iou < cfg.pos_iou);
  m = match_anchors(anchors, small, cfg.pos_iou);
  CHECK(m.positives == 1);

  // Every ground truth gets at least one anchor on random instances.
  Rng rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<Annotation> batch;
    for (int j = 0; j < 3; ++j) {
      const double x0 = rng.uniform(0.0, 50.0);
      const double y0 = rng.uniform(0.0, 50.0);
      batch.push_back(Annotation{BBox{x0, y0, x0 + rng.uniform(2.0, 14.0),
                                      y0 + rng.uniform(2.0, 14.0)},
                                 0, false});
    }
    m = match_anchors(anchors, batch, cfg.pos_iou);
    std::vector<bool> matched(batch.size(), false);
    for (int g : m.gt_index)
      if (g >= 0)
        matched[std::size_t(g)] = true;
    for (bool hit : matched)
      CHECK(hit);
  }
}

TEST_CASE("box encoding: fixed point, known value, exact inverse") {
  const BBox anchor{10.0, 10.0, 20.0, 20.0};
  const OffsetVector zero = encode_box(anchor, anchor, 0.1, 0.2);
  CHECK(zero.tx == 0.0);
  CHECK(zero.ty == 0.0);
  CHECK(zero.tw == 0.0);
  CHECK(zero.th == 0.0);

  // Twice the anchor width at the same center: tw = ln 2 / 0.2.
  const BBox wide{5.0, 10.0, 25.0, 20.0};
  const OffsetVector t = encode_box(wide, anchor, 0.1, 0.2);
  CHECK(t.tw == doctest::Approx(std::log(2.0) / 0.2).epsilon(1e-12));
  CHECK(t.tx == 0.0);

  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double ax = rng.uniform(0.0, 50.0), ay = rng.uniform(0.0, 50.0);
    const BBox a{ax, ay, ax + rng.uniform(1.0, 14.0),
                 ay + rng.uniform(1.0, 14.0)};
    const double gx = rng.uniform(0.0, 50.0), gy = rng.uniform(0.0, 50.0);
    const BBox g{gx, gy, gx + rng.uniform(1.0, 14.0),
                 gy + rng.uniform(1.0, 14.0)};
    const BBox back = decode_box(encode_box(g, a, 0.1, 0.2), a, 0.1, 0.2);
    CHECK(back.xmin == doctest::Approx(g.xmin).epsilon(1e-9));
    CHECK(back.ymin == doctest::Approx(g.ymin).epsilon(1e-9));
    CHECK(back.xmax == doctest::Approx(g.xmax).epsilon(1e-9));
    CHECK(back.ymax == doctest::Approx(g.ymax).epsilon(1e-9));
  }

  CHECK_THROWS_AS(encode_box(BBox{5, 5, 5, 9}, anchor, 0.1, 0.2),
                  ContractError);
}

TEST_CASE("smooth L1 and cross entropy match their definitions") {
  CHECK(smooth_l1(0.0) == 0.0);
  CHECK(smooth_l1(0.5) == 0.125);
  CHECK(smooth_l1(-0.5) == 0.125);
  CHECK(smooth_l1(2.0) == 1.5);
  // Continuity and derivative consistency at the transition point.
  CHECK(smooth_l1(1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(smooth_l1_grad(0.5) == 0.5);
  CHECK(smooth_l1_grad(2.0) == 1.0);
  CHECK(smooth_l1_grad(-2.0) == -1.0);

  const std::vector<double> sure = {0.0, 1.0};
  CHECK(cross_entropy(sure, 1) == 0.0);
  const std::vector<double> half = {0.5, 0.5};
  CHECK(cross_entropy(half, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const std::vector<double> uniform4 = {0.25, 0.25, 0.25, 0.25};
  CHECK(cross_entropy(uniform4, 2) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  // The floor keeps a zero-probability target finite.
  const std::vector<double> wrong = {1.0, 0.0};
  CHECK(cross_entropy(wrong, 1) == doctest::Approx(-std::log(1e-12)));

  std::vector<double> logits = {0.3, -1.2, 2.0, 0.0, 0.7};
  const auto p = softmax(logits);
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) ==
        doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("multibox loss: zero-match boundary and perfect prediction") {
  AnchorConfig acfg;
  LossConfig lcfg;
  const auto anchors = generate_anchors(acfg, 64);
  const std::size_t A = anchors.size();
  std::vector<double> conf(A * 5, 0.0), loc(A * 4, 0.0);

  const LossResult none = multibox_loss(conf, loc, anchors, {}, acfg, lcfg);
  CHECK(none.total == 0.0);
  CHECK(none.conf == 0.0);
  CHECK(none.loc == 0.0);
  CHECK(none.positives == 0);

  // One ground truth exactly on an anchor, logits strongly favoring the
  // right class everywhere: loss collapses toward zero.
  std::vector<Annotation> gts = {Annotation{anchors[37], 1, false}};
  const MatchAssignment m = match_anchors(anchors, gts, acfg.pos_iou);
  for (std::size_t a = 0; a < A; ++a) {
    const int cls = m.label[a] < 0 ? 0 : 1 + m.label[a];
    conf[a * 5 + std::size_t(cls)] = 60.0; // softmax ~ 1 on the true class
    if (m.gt_index[a] >= 0) {
      const OffsetVector t = encode_box(gts[std::size_t(m.gt_index[a])].bbox,
                                        anchors[a], acfg.variance_center,
                                        acfg.variance_size);
      loc[a * 4 + 0] = t.tx;
      loc[a * 4 + 1] = t.ty;
      loc[a * 4 + 2] = t.tw;
      loc[a * 4 + 3] = t.th;
    }
  }
  const LossResult perfect =
      multibox_loss(conf, loc, anchors, gts, acfg, lcfg);
  CHECK(perfect.positives == m.positives);
  CHECK(perfect.total == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("multibox loss equals the brute-force reference on small instances") {
  Rng rng(29);
  AnchorConfig acfg;
  acfg.grid = 1; // 1x1 grid x 3 shapes on a 16px image

  for (int rep = 0; rep < 60; ++rep) {
    // A handful of extra hand-placed anchors makes 5 per instance.
    std::vector<BBox> anchors = generate_anchors(acfg, 16);
    for (int e = 0; e < 2; ++e) {
      const double x0 = rng.uniform(0.0, 10.0), y0 = rng.uniform(0.0, 10.0);
      anchors.push_back(BBox{x0, y0, x0 + rng.uniform(2.0, 6.0),
                             y0 + rng.uniform(2.0, 6.0)});
    }
    const std::size_t A = anchors.size();

    std::vector<Annotation> gts;
    const int n_gt = rng.uniform_int(0, 2);
    for (int j = 0; j < n_gt; ++j) {
      const double x0 = rng.uniform(0.0, 10.0), y0 = rng.uniform(0.0, 10.0);
      gts.push_back(Annotation{BBox{x0, y0, x0 + rng.uniform(2.0, 6.0),
                                    y0 + rng.uniform(2.0, 6.0)},
                               rng.uniform_int(0, 3), false});
    }

    std::vector<double> conf(A * 5), loc(A * 4);
    for (double& v : conf)
      v = rng.normal();
    for (double& v : loc)
      v = rng.normal();

    LossConfig lcfg;
    lcfg.alpha = rng.uniform(0.5, 2.0);
    const LossResult got = multibox_loss(conf, loc, anchors, gts, acfg, lcfg);
    const oracle::LossRef want = oracle::multibox_loss_ref(
        conf, loc, anchors, gts, acfg, lcfg.alpha, lcfg.neg_pos_ratio);

    CHECK(got.positives == want.positives);
    CHECK(got.total ==
          doctest::Approx(want.total).epsilon(1e-9).scale(1.0));
    CHECK(got.conf == doctest::Approx(want.conf).epsilon(1e-9).scale(1.0));
    CHECK(got.loc == doctest::Approx(want.loc).epsilon(1e-9).scale(1.0));
    CHECK(got.total >= 0.0);
  }
}

TEST_CASE("doubling alpha doubles the localization share") {
  Rng rng(31);
  AnchorConfig acfg;
  const auto anchors = generate_anchors(acfg, 64);
  const std::size_t A = anchors.size();
  std::vector<double> conf(A * 5), loc(A * 4);
  for (double& v : conf)
    v = rng.normal();
  for (double& v : loc)
    v = rng.normal();
  std::vector<Annotation> gts = {
      Annotation{BBox{8, 8, 24, 24}, 0, false},
      Annotation{BBox{30, 20, 52, 44}, 3, false},
  };

  LossConfig one;
  one.alpha = 1.0;
  LossConfig two;
  two.alpha = 2.0;
  const LossResult l1 = multibox_loss(conf, loc, anchors, gts, acfg, one);
  const LossResult l2 = multibox_loss(conf, loc, anchors, gts, acfg, two);
  REQUIRE(l1.positives > 0);
  const double conf_share = l1.conf / l1.positives;
  CHECK(l2.total - conf_share ==
        doctest::Approx(2.0 * (l1.total - conf_share)).epsilon(1e-9));
}

TEST_CASE("forward pass: shapes, determinism, zero-parameter symmetry") {
  ModelState model = tiny_model(1);
  const Architecture& arch = model.arch;
  Rng rng(33);
  Image img = Image::create(arch.input_size, arch.input_size);
  for (double& v : img.pixels)
    v = rng.next_double();

  const HeadOutput a = forward(model, img);
  const HeadOutput b = forward(model, img);
  CHECK(a.conf == b.conf);
  CHECK(a.loc == b.loc);
  CHECK(a.conf.size() == std::size_t(arch.num_anchors() * 5));
  CHECK(a.loc.size() == std::size_t(arch.num_anchors() * 4));

  ModelState zero = model;
  std::fill(zero.params.begin(), zero.params.end(), 0.0);
  const HeadOutput z = forward(zero, img);
  for (double v : z.conf)
    CHECK(v == 0.0);
  for (std::size_t anchor = 0; anchor < std::size_t(arch.num_anchors());
       ++anchor) {
    const auto p = softmax(std::span<const double>(z.conf).subspan(anchor * 5,
                                                                   5));
    for (double v : p)
      CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
  }

  Image wrong = Image::create(8, 8);
  CHECK_THROWS_AS(forward(model, wrong), ContractError);
}

TEST_CASE("checkpoint round trip is bitwise; corruption is detected") {
  const auto dir = scratch("ckpt");
  ModelState model = tiny_model(17);
  model.step = 1234;
  const std::string path = (dir / "m.wbhm").string();
  save_model(model, path);
  const ModelState back = load_model(path);
  CHECK(back.params == model.params);
  CHECK(back.arch == model.arch);
  CHECK(back.anchors == model.anchors);
  CHECK(back.classes == model.classes);
  CHECK(back.step == 1234);

  // Flip one parameter byte, well clear of the trailing checksum line.
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  REQUIRE(bool(f));
  f.seekg(-100, std::ios::end);
  char c = 0;
  f.read(&c, 1);
  f.seekp(-100, std::ios::end);
  c = char(c ^ 0x40);
  f.write(&c, 1);
  f.close();
  CHECK_THROWS_AS(load_model(path), ChecksumError);

  std::ofstream(dir / "v9.wbhm", std::ios::binary) << "wbh-model v9\n";
  CHECK_THROWS_AS(load_model((dir / "v9.wbhm").string()), VersionError);
}

TEST_CASE("loss gradient: zero-match batches and finite-difference spots") {
  ModelState model = tiny_model(7);
  LossConfig lcfg;

  Rng rng(41);
  LoadedSample blank;
  blank.image = Image::create(16, 16, 0.5);
  const BatchGradient empty_grad = loss_gradient(model, {&blank, 1}, lcfg);
  CHECK(empty_grad.loss == 0.0);
  for (double g : empty_grad.grad)
    CHECK(g == 0.0);
  CHECK(empty_grad.grad.size() == model.params.size());

  // Spot finite-difference agreement (full sweep lives in acceptance).
  // h is small enough not to step across ReLU / pooling kinks.
  const LoadedSample sample = random_sample(rng, 16, 2);
  const BatchGradient bg = loss_gradient(model, {&sample, 1}, lcfg);
  const double h = 1e-5;
  int checked = 0;
  for (std::size_t i = 0; i < model.params.size(); i += 97) {
    ModelState plus = model, minus = model;
    plus.params[i] += h;
    minus.params[i] -= h;
    const double fd = (loss_gradient(plus, {&sample, 1}, lcfg).loss -
                       loss_gradient(minus, {&sample, 1}, lcfg).loss) /
                      (2.0 * h);
    if (std::fabs(bg.grad[i]) > 1e-6) {
      CHECK(std::fabs(bg.grad[i] - fd) /
                std::max(std::fabs(bg.grad[i]), std::fabs(fd)) <
            1e-4);
      ++checked;
    }
  }
  CHECK(checked > 0);

  CHECK_THROWS_AS(loss_gradient(model, {}, lcfg), ContractError);
}

TEST_CASE("training: no-op boundaries, learnability, determinism") {
  const auto dir = scratch("train");
  SceneSpec spec = SceneSpec::family_a();
  spec.seed = 91;
  spec.image_size = 16;
  spec.objects_min = spec.objects_max = 1;
  spec.scale_min = {8, 8, 8, 8};
  spec.scale_max = {9, 9, 9, 9};
  spec.horizon = 7;
  const DatasetManifest m = generate_dataset(spec, 4, dir / "ds");
  const LoadedDataset data = load_dataset(m, dir / "ds");

  ModelState model = tiny_model(3);

  TrainConfig zero_steps;
  zero_steps.steps = 0;
  ModelState a = model;
  train(a, data, zero_steps);
  CHECK(a.params == model.params);
  CHECK(a.step == 0);

  TrainConfig zero_lr;
  zero_lr.lr = 0.0;
  zero_lr.steps = 3;
  zero_lr.batch_size = 2;
  ModelState b = model;
  train(b, data, zero_lr);
  CHECK(b.params == model.params);
  CHECK(b.step == 3);

  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.steps = 60;
  cfg.batch_size = 4;
  cfg.seed = 5;
  ModelState c = model;
  const TrainResult res = train(c, data, cfg);
  REQUIRE(res.loss_trace.size() == 60);
  CHECK(res.loss_trace.back() < res.loss_trace.front());
  CHECK(c.step == 60);

  // Bitwise determinism of the whole optimization.
  ModelState d = model;
  train(d, data, cfg);
  CHECK(d.params == c.params);

  // Fine-tuning is the same mechanics from a trained start.
  ModelState e = c;
  TrainConfig ft = cfg;
  ft.steps = 0;
  fine_tune(e, data, ft);
  CHECK(e.params == c.params);
  ModelState f1 = c, f2 = c;
  ft.steps = 5;
  fine_tune(f1, data, ft);
  train(f2, data, ft);
  CHECK(f1.params == f2.params);

  LoadedDataset empty;
  empty.classes = ClassSet::canonical();
  CHECK_THROWS_AS(train(c, empty, cfg), ContractError);
}

TEST_CASE("nms: suppression, disjoint retention, antichain property") {
  std::vector<Detection> dets = {
      Detection{BBox{10, 10, 20, 20}, 0, 0.9},
      Detection{BBox{10, 10, 20, 20}, 0, 0.8}, // duplicate, must go
      Detection{BBox{40, 40, 50, 50}, 0, 0.7}, // disjoint, must stay
  };
  const auto keep = nms_keep(dets, 0.45);
  REQUIRE(keep.size() == 2);
  CHECK(dets[keep[0]].confidence == 0.9);
  CHECK(dets[keep[1]].confidence == 0.7);

  Rng rng(55);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Detection> cloud;
    for (int i = 0; i < 25; ++i) {
      const double x0 = rng.uniform(0.0, 50.0), y0 = rng.uniform(0.0, 50.0);
      cloud.push_back(Detection{BBox{x0, y0, x0 + rng.uniform(2.0, 12.0),
                                     y0 + rng.uniform(2.0, 12.0)},
                                0, rng.next_double()});
    }
    const auto kept = nms_keep(cloud, 0.45);
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j)
        CHECK(iou(cloud[kept[i]].bbox, cloud[kept[j]].bbox) <= 0.45);
  }
}

TEST_CASE("predict: threshold semantics and output hygiene") {
  ModelState model = tiny_model(9);
  Rng rng(60);
  Image img = Image::create(16, 16);
  for (double& v : img.pixels)
    v = rng.next_double();

  PredictConfig impossible;
  impossible.score_threshold = 1.0; // softmax scores are strictly below 1
  CHECK(predict(model, img, impossible).empty());

  PredictConfig open;
  open.score_threshold = 0.05;
  const auto dets = predict(model, img, open);
  CHECK(int(dets.size()) <= open.max_detections);
  for (std::size_t i = 1; i < dets.size(); ++i)
    CHECK(dets[i - 1].confidence >= dets[i].confidence);
  for (const Detection& d : dets) {
    CHECK(d.bbox.valid());
    CHECK(d.bbox.xmax <= 16.0);
    CHECK(d.bbox.ymax <= 16.0);
    CHECK(d.class_id >= 0);
    CHECK(d.class_id < 4);
    CHECK(d.confidence > 0.0);
    CHECK(d.confidence < 1.0);
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wbh/blur.hpp"
#include "wbh/classes.hpp"
#include "wbh/coco_json.hpp"
#include "wbh/corruption.hpp"
#include "wbh/error.hpp"
#include "wbh/geometry.hpp"
#include "wbh/image.hpp"
#include "wbh/manifest.hpp"
#include "wbh/rng.hpp"
#include "wbh/scenegen.hpp"
#include "wbh/voc_xml.hpp"

#include "oracles.hpp"

using namespace wbh;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::path("scratch") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(bool(f));
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Image random_image(int w, int h, Rng& rng) {
  Image img = Image::create(w, h);
  for (double& v : img.pixels)
    v = rng.next_double();
  return img;
}

BBox random_box(Rng& rng, double size) {
  const double x0 = rng.uniform(0.0, size - 2.0);
  const double y0 = rng.uniform(0.0, size - 2.0);
  return BBox{x0, y0, x0 + rng.uniform(1.0, size - x0),
              y0 + rng.uniform(1.0, size - y0)};
}

DatasetManifest tiny_manifest(const std::filesystem::path& dir, int n,
                              std::uint64_t seed) {
  SceneSpec spec = SceneSpec::family_a();
  spec.seed = seed;
  return generate_dataset(spec, n, dir);
}

} // namespace

TEST_CASE("iou identity, disjoint, and hand-computed overlap") {
  const BBox b{3.0, 4.0, 10.0, 12.0};
  CHECK(iou(b, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(iou(BBox{0, 0, 1, 1}, BBox{5, 5, 6, 6}) == 0.0);
  // Intersection 2, union 6.
  CHECK(iou(BBox{0, 0, 2, 2}, BBox{1, 0, 3, 2}) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("iou symmetry and containment over random boxes") {
  Rng rng(101);
  for (int i = 0; i < 200; ++i) {
    const BBox a = random_box(rng, 64.0);
    const BBox b = random_box(rng, 64.0);
    CHECK(iou(a, b) == iou(b, a));
    CHECK(iou(a, b) >= 0.0);
    CHECK(iou(a, b) <= 1.0);
    CHECK(iou(a, b) == doctest::Approx(oracle::iou_ref(a, b)).epsilon(1e-12));
  }
  // Contained box: IoU = area ratio.
  const BBox outer{0, 0, 10, 10};
  const BBox inner{2, 2, 4, 6};
  CHECK(iou(outer, inner) == doctest::Approx(8.0 / 100.0).epsilon(1e-12));
}

TEST_CASE("class set lookup and duplicate rejection") {
  const ClassSet cs = ClassSet::canonical();
  REQUIRE(cs.size() == 4);
  CHECK(cs.name(0) == "car");
  CHECK(cs.name(1) == "bus");
  CHECK(cs.name(2) == "person");
  CHECK(cs.name(3) == "bicycle");
  CHECK(cs.index_of("person") == 2);
  CHECK(!cs.index_of("truck").has_value());
  CHECK_THROWS_AS(ClassSet({"car", "car"}), ConfigError);
}

TEST_CASE("voc xml: objects, difficult flag, unknown names dropped") {
  const std::string doc = slurp(std::filesystem::path(FIXTURE_DIR) /
                                "scene_voc.xml");
  const VocParseResult r = parse_voc_xml(doc, ClassSet::canonical());
  CHECK(r.width == 640);
  CHECK(r.height == 480);
  REQUIRE(r.annotations.size() == 2);
  CHECK(r.annotations[0].class_id == 0);
  CHECK(r.annotations[0].bbox == BBox{10, 20, 110, 220});
  CHECK_FALSE(r.annotations[0].difficult);
  CHECK(r.annotations[1].class_id == 2);
  CHECK(r.annotations[1].difficult);
  CHECK(r.dropped == 1); // the truck
}

TEST_CASE("voc xml: empty, truncated, and missing-field documents") {
  const VocParseResult empty = parse_voc_xml(
      "<annotation><size><width>8</width><height>8</height></size>"
      "</annotation>",
      ClassSet::canonical());
  CHECK(empty.annotations.empty());

  const std::string truncated = slurp(std::filesystem::path(FIXTURE_DIR) /
                                      "scene_voc_truncated.xml");
  CHECK_THROWS_AS(parse_voc_xml(truncated, ClassSet::canonical()),
                  ParseError);

  CHECK_THROWS_AS(
      parse_voc_xml("<annotation><size><width>8</width><height>8</height>"
                    "</size><object><name>car</name></object></annotation>",
                    ClassSet::canonical()),
      ParseError); // object 0 has no <bndbox>
}

TEST_CASE("coco json: conversion, category filtering, manifest shape") {
  const std::string doc = slurp(std::filesystem::path(FIXTURE_DIR) /
                                "scene_coco.json");
  const CocoParseResult r = parse_coco_json(doc, ClassSet::canonical());
  REQUIRE(r.manifest.records.size() == 2);
  CHECK(r.dropped == 1); // the truck annotation

  const ImageRecord& a = r.manifest.records[0];
  CHECK(a.image_path == "scene_0001.ppm");
  CHECK(a.width == 640);
  CHECK(a.condition == "clean");
  REQUIRE(a.annotations.size() == 2);
  CHECK(a.annotations[0].class_id == 1); // bus
  CHECK(a.annotations[0].bbox == BBox{5, 5, 15, 25});
  CHECK(a.annotations[1].class_id == 0); // car
  CHECK(a.annotations[1].bbox == BBox{50, 60, 90, 90});

  const ImageRecord& b = r.manifest.records[1];
  REQUIRE(b.annotations.size() == 1);
  CHECK(b.annotations[0].class_id == 2); // person
  CHECK(b.annotations[0].bbox == BBox{10, 12, 24, 62});
}

TEST_CASE("coco json: structured errors") {
  CHECK_THROWS_AS(parse_coco_json("{\"images\": []}", ClassSet::canonical()),
                  ParseError); // missing annotations/categories arrays
  const std::string bad = slurp(std::filesystem::path(FIXTURE_DIR) /
                                "scene_coco_bad.json");
  CHECK_THROWS_AS(parse_coco_json(bad, ClassSet::canonical()),
                  ParseError); // annotation references unknown image id
  CHECK_THROWS_AS(parse_coco_json("{not json", ClassSet::canonical()),
                  ParseError);
}

TEST_CASE("manifest round trip is field-exact") {
  const auto dir = scratch("manifest_rt");
  DatasetManifest m;
  m.classes = ClassSet::canonical();
  m.provenance = "unit fixture";
  ImageRecord rec;
  rec.image_path = "imgs/scene_0001.ppm";
  rec.width = 64;
  rec.height = 64;
  rec.condition = "corrupted:fog";
  rec.annotations = {
      Annotation{BBox{1.25, 2.5, 10.75, 20.0}, 3, true},
      Annotation{BBox{0.0, 0.0, 64.0, 64.0}, 0, false},
  };
  m.records = {rec};

  write_manifest(m, dir / "m.txt");
  CHECK(read_manifest(dir / "m.txt") == m);

  DatasetManifest empty;
  empty.classes = ClassSet::canonical();
  write_manifest(empty, dir / "empty.txt");
  CHECK(read_manifest(dir / "empty.txt") == empty);

  std::ofstream(dir / "bad.txt") << "weatherbias-manifest v9\n";
  CHECK_THROWS_AS(read_manifest(dir / "bad.txt"), VersionError);
}

TEST_CASE("filter_classes remaps ids and is idempotent") {
  DatasetManifest m;
  m.classes =
      ClassSet({"car", "bus", "truck", "motorcycle", "person", "bicycle"});
  ImageRecord rec;
  rec.image_path = "a.ppm";
  rec.width = rec.height = 64;
  rec.annotations = {
      Annotation{BBox{0, 0, 10, 10}, 2, false},  // truck: should vanish
      Annotation{BBox{5, 5, 20, 20}, 4, false},  // person
      Annotation{BBox{30, 30, 40, 44}, 5, false}, // bicycle
  };
  m.records = {rec};

  const ClassSet keep = ClassSet::canonical();
  const DatasetManifest f = filter_classes(m, keep);
  REQUIRE(f.records.size() == 1);
  REQUIRE(f.records[0].annotations.size() == 2);
  CHECK(f.records[0].annotations[0].class_id == 2); // person in keep order
  CHECK(f.records[0].annotations[1].class_id == 3); // bicycle in keep order
  CHECK(f.classes == keep);
  CHECK(filter_classes(f, keep) == f);

  CHECK_THROWS_AS(filter_classes(f, ClassSet({"car", "truck"})),
                  ConfigError); // truck absent from the filtered universe
}

TEST_CASE("mix_datasets boundaries, count rule, and determinism") {
  const auto dir = scratch("mix");
  const DatasetManifest clean = tiny_manifest(dir / "clean", 8, 33);
  DatasetManifest corrupted = clean;
  for (ImageRecord& r : corrupted.records)
    r.condition = "corrupted:fog";

  CHECK(mix_datasets(clean, corrupted, 0.0, 5).records.size() == 8);
  CHECK(mix_datasets(clean, corrupted, 1.0, 5).records.size() == 16);
  CHECK(mix_datasets(clean, corrupted, 0.25, 5).records.size() ==
        8 + 2); // floor(0.25 * 8)
  CHECK(mix_datasets(clean, corrupted, 0.25, 5) ==
        mix_datasets(clean, corrupted, 0.25, 5));

  int kept_corrupted = 0;
  for (const ImageRecord& r : mix_datasets(clean, corrupted, 0.25, 5).records)
    if (r.condition != "clean")
      ++kept_corrupted;
  CHECK(kept_corrupted == 2);

  DatasetManifest other = corrupted;
  other.classes = ClassSet({"car"});
  for (ImageRecord& r : other.records)
    r.annotations.clear();
  CHECK_THROWS_AS(mix_datasets(clean, other, 0.5, 5), ConfigError);
}

TEST_CASE("ppm round trip within 8-bit quantization") {
  const auto dir = scratch("ppm");
  Rng rng(7);
  const Image img = random_image(23, 17, rng);
  write_ppm(img, dir / "x.ppm");
  const Image back = read_ppm(dir / "x.ppm");
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    max_diff = std::max(max_diff, std::fabs(img.pixels[i] - back.pixels[i]));
  CHECK(max_diff <= 1.0 / 255.0);

  const Image black = Image::create(1, 1, 0.0);
  write_ppm(black, dir / "b.ppm");
  for (double v : read_ppm(dir / "b.ppm").pixels)
    CHECK(v == 0.0);

  std::ofstream(dir / "trunc.ppm", std::ios::binary) << "P6\n4 4\n255\nab";
  CHECK_THROWS_AS(read_ppm(dir / "trunc.ppm"), Error);
  std::ofstream(dir / "magic.ppm", std::ios::binary) << "P5\n1 1\n255\nabc";
  CHECK_THROWS_AS(read_ppm(dir / "magic.ppm"), Error);
}

TEST_CASE("gaussian kernel: identity, normalization, sigma-1 weights") {
  const Kernel1D id = gaussian_kernel(0.0);
  CHECK(id.radius == 0);
  REQUIRE(id.weights.size() == 1);
  CHECK(id.weights[0] == 1.0);

  for (double sigma : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    const Kernel1D k = gaussian_kernel(sigma);
    CHECK(k.radius == int(std::ceil(3.0 * sigma)));
    double sum = 0.0;
    for (double w : k.weights)
      sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i <= k.radius; ++i) // symmetry
      CHECK(k.weights[std::size_t(k.radius - i)] ==
            k.weights[std::size_t(k.radius + i)]);
  }

  // exp(-k^2/2) for k in {-1,0,1}, normalized.
  const Kernel1D k1 = gaussian_kernel(1.0, 1);
  REQUIRE(k1.weights.size() == 3);
  CHECK(k1.weights[0] == doctest::Approx(0.2741).epsilon(1e-3));
  CHECK(k1.weights[1] == doctest::Approx(0.4519).epsilon(1e-3));
  CHECK(k1.weights[2] == doctest::Approx(0.2741).epsilon(1e-3));

  CHECK_THROWS_AS(gaussian_kernel(-1.0), ConfigError);
}

TEST_CASE("separable convolution: constants, identity, impulse response") {
  Rng rng(11);
  const Image flat = Image::create(9, 9, 0.37);
  const Image blurred = convolve_separable(flat, gaussian_kernel(1.5));
  for (double v : blurred.pixels)
    CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

  const Image img = random_image(12, 10, rng);
  const Image same = convolve_separable(img, gaussian_kernel(0.0));
  CHECK(same.pixels == img.pixels);

  // A centered impulse spreads into the outer product of the weights.
  Image impulse = Image::create(5, 5, 0.0);
  impulse.at(2, 2, 0) = 1.0;
  const Kernel1D k = gaussian_kernel(1.0, 1);
  const Image spread = convolve_separable(impulse, k);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      const bool inside = std::abs(x - 2) <= 1 && std::abs(y - 2) <= 1;
      const double expect =
          inside ? k.weights[std::size_t(x - 1)] * k.weights[std::size_t(y - 1)]
                 : 0.0;
      CHECK(spread.at(x, y, 0) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("blur commutes with quarter rotation") {
  Rng rng(13);
  const Image img = random_image(14, 14, rng);
  auto rot90 = [](const Image& in) {
    Image out = Image::create(in.height, in.width);
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x)
        for (int c = 0; c < 3; ++c)
          out.at(in.height - 1 - y, x, c) = in.at(x, y, c);
    return out;
  };
  const Kernel1D k = gaussian_kernel(1.25);
  const Image a = rot90(convolve_separable(img, k));
  const Image b = convolve_separable(rot90(img), k);
  REQUIRE(a.pixels.size() == b.pixels.size());
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    CHECK(a.pixels[i] == doctest::Approx(b.pixels[i]).epsilon(1e-12));
}

TEST_CASE("double blur identity and constant invariance") {
  Rng rng(17);
  const Image img = random_image(10, 8, rng);
  CHECK(double_gaussian_blur(img, 0.0, 0.0).pixels == img.pixels);
  const Image flat = Image::create(8, 8, 0.5);
  const Image out = double_gaussian_blur(flat, 1.0, 2.0);
  for (double v : out.pixels)
    CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("fog corruption: boundaries, monotone pull toward airlight") {
  Rng rng(19);
  const Image img = random_image(16, 16, rng);

  CorruptionSpec fog;
  fog.kind = CorruptionSpec::Kind::fog;
  fog.airlight = 0.9;

  fog.fog_density = 0.0;
  CHECK(apply_corruption(img, fog).pixels == img.pixels);

  fog.fog_density = 1.0;
  for (double v : apply_corruption(img, fog).pixels)
    CHECK(v == doctest::Approx(0.9).epsilon(1e-12));

  fog.fog_density = 0.3;
  const Image light = apply_corruption(img, fog);
  fog.fog_density = 0.7;
  const Image heavy = apply_corruption(img, fog);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double d_light = std::fabs(light.pixels[i] - 0.9);
    const double d_heavy = std::fabs(heavy.pixels[i] - 0.9);
    if (std::fabs(img.pixels[i] - 0.9) > 1e-9)
      CHECK(d_heavy < d_light);
  }
}

TEST_CASE("corruptions are deterministic and annotation-preserving") {
  Rng rng(23);
  const Image img = random_image(32, 32, rng);
  for (auto kind :
       {CorruptionSpec::Kind::double_gaussian, CorruptionSpec::Kind::fog,
        CorruptionSpec::Kind::rain, CorruptionSpec::Kind::snow,
        CorruptionSpec::Kind::sand}) {
    CorruptionSpec spec;
    spec.kind = kind;
    spec.seed = 99;
    const Image a = apply_corruption(img, spec);
    const Image b = apply_corruption(img, spec);
    CHECK(a.pixels == b.pixels);
    for (double v : a.pixels) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("corrupt_dataset: order independence and condition tags") {
  const auto dir = scratch("corrupt_ds");
  const DatasetManifest src = tiny_manifest(dir / "clean", 5, 41);

  CorruptionSpec rain;
  rain.kind = CorruptionSpec::Kind::rain;
  rain.seed = 7;

  const DatasetManifest out1 =
      corrupt_dataset(src, dir / "clean", rain, dir / "wet1");

  DatasetManifest shuffled = src;
  std::reverse(shuffled.records.begin(), shuffled.records.end());
  const DatasetManifest out2 =
      corrupt_dataset(shuffled, dir / "clean", rain, dir / "wet2");

  REQUIRE(out1.records.size() == 5);
  for (std::size_t i = 0; i < out1.records.size(); ++i) {
    const ImageRecord& r = out1.records[i];
    CHECK(r.condition == "corrupted:rain");
    CHECK(r.annotations == src.records[i].annotations);
    // Same image path gets identical bytes regardless of record order.
    CHECK(slurp(dir / "wet1" / r.image_path) ==
          slurp(dir / "wet2" / r.image_path));
  }

  DatasetManifest empty;
  empty.classes = ClassSet::canonical();
  const DatasetManifest none =
      corrupt_dataset(empty, dir / "clean", rain, dir / "wet3");
  CHECK(none.records.empty());
}

TEST_CASE("scene rendering: determinism, counts, tight labels") {
  SceneSpec spec = SceneSpec::family_a();
  spec.seed = 77;

  const RenderedScene a = render_scene(spec, 3);
  const RenderedScene b = render_scene(spec, 3);
  CHECK(a.image.pixels == b.image.pixels);
  REQUIRE(a.annotations.size() == b.annotations.size());

  SceneSpec one = spec;
  one.objects_min = one.objects_max = 1;
  CHECK(render_scene(one, 0).annotations.size() == 1);

  for (int idx = 0; idx < 6; ++idx) {
    const RenderedScene s = render_scene(spec, idx);
    REQUIRE(s.annotations.size() == s.objects.size());
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const PlacedObject& o = s.objects[i];
      const BBox& box = s.annotations[i].bbox;
      CHECK(box.xmin >= 0.0);
      CHECK(box.ymin >= 0.0);
      CHECK(box.xmax <= spec.image_size);
      CHECK(box.ymax <= spec.image_size);
      // The annotation is the tight bound of the object's silhouette.
      int minx = o.w, miny = o.h, maxx = -1, maxy = -1;
      for (int y = 0; y < o.h; ++y)
        for (int x = 0; x < o.w; ++x)
          if (o.mask[std::size_t(y) * o.w + x]) {
            minx = std::min(minx, x);
            miny = std::min(miny, y);
            maxx = std::max(maxx, x);
            maxy = std::max(maxy, y);
          }
      REQUIRE(maxx >= 0);
      CHECK(box == BBox{double(o.x + minx), double(o.y + miny),
                        double(o.x + maxx + 1), double(o.y + maxy + 1)});
    }
  }
}

TEST_CASE("scene occlusion keeps at least 40% of each silhouette visible") {
  SceneSpec spec = SceneSpec::family_a();
  spec.seed = 1234;
  for (int idx = 0; idx < 10; ++idx) {
    const RenderedScene s = render_scene(spec, idx);
    std::vector<std::vector<std::uint8_t>> canvas(
        s.objects.size(),
        std::vector<std::uint8_t>(std::size_t(spec.image_size) *
                                  spec.image_size));
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const PlacedObject& o = s.objects[i];
      for (int y = 0; y < o.h; ++y)
        for (int x = 0; x < o.w; ++x)
          if (o.mask[std::size_t(y) * o.w + x])
            canvas[i][std::size_t(o.y + y) * spec.image_size + (o.x + x)] = 1;
    }
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      int total = 0, visible = 0;
      for (std::size_t p = 0; p < canvas[i].size(); ++p) {
        if (!canvas[i][p])
          continue;
        ++total;
        bool covered = false;
        for (std::size_t j = i + 1; j < s.objects.size() && !covered; ++j)
          covered = canvas[j][p] != 0;
        if (!covered)
          ++visible;
      }
      REQUIRE(total > 0);
      CHECK(visible * 10 >= total * 4);
    }
  }
}

TEST_CASE("generate_dataset: class coverage and seed sensitivity") {
  const auto dir = scratch("gen");
  CHECK(tiny_manifest(dir / "none", 0, 1).records.empty());

  const DatasetManifest m = tiny_manifest(dir / "hundred", 100, 5);
  REQUIRE(m.records.size() == 100);
  validate_manifest(m);

  int counts[4] = {0, 0, 0, 0};
  int total = 0;
  for (const ImageRecord& r : m.records)
    for (const Annotation& a : r.annotations) {
      ++counts[a.class_id];
      ++total;
    }
  for (int c = 0; c < 4; ++c)
    CHECK(counts[c] * 10 >= total); // every class >= 10% of objects

  const DatasetManifest other = tiny_manifest(dir / "other", 100, 6);
  bool any_difference = false;
  for (std::size_t i = 0; i < 100 && !any_difference; ++i)
    any_difference = slurp(dir / "hundred" / m.records[i].image_path) !=
                     slurp(dir / "other" / other.records[i].image_path);
  CHECK(any_difference);
}

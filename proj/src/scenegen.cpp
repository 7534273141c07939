#include "wbh/scenegen.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

#include "wbh/error.hpp"
#include "wbh/rng.hpp"

namespace wbh {

void SceneSpec::validate() const {
  if (image_size < 16 || image_size % 8 != 0)
    throw ConfigError("SceneSpec: image_size must be >= 16 and a multiple of 8");
  if (objects_min < 1 || objects_max < objects_min)
    throw ConfigError("SceneSpec: need objects_max >= objects_min >= 1");
  if (horizon < 0 || horizon > image_size)
    throw ConfigError("SceneSpec: horizon outside image");
  if (noise_amp < 0 || noise_amp > 32)
    throw ConfigError("SceneSpec: noise_amp out of range");
  for (int k = 0; k < 4; ++k) {
    if (scale_min[std::size_t(k)] < 8)
      throw ConfigError("SceneSpec: objects must be >= 8 px");
    if (scale_max[std::size_t(k)] < scale_min[std::size_t(k)])
      throw ConfigError("SceneSpec: scale_max < scale_min");
    if (scale_max[std::size_t(k)] * 10 > image_size * 6)
      throw ConfigError("SceneSpec: objects must be <= 60% of image side");
  }
}

SceneSpec SceneSpec::family_a() {
  SceneSpec s;
  // Buses sit at a distance (14-20 px): at 64x64 a near-field bus is a large
  // high-contrast blob that stays detectable under any photometric
  // degradation, which would mask the clean-vs-degraded gap the benchmark
  // measures.
  s.scale_min = {16, 14, 12, 14};
  s.scale_max = {30, 20, 26, 26};
  return s;
}

SceneSpec SceneSpec::family_b() {
  SceneSpec s;
  s.sky = {191, 173, 148};
  s.road = {115, 107, 102};
  s.horizon = 32;
  s.noise_amp = 5;
  s.scale_min = {14, 18, 11, 12};
  s.scale_max = {26, 32, 22, 22};
  return s;
}

namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

// Sprite: small RGB canvas with 0/1 coverage mask. All drawing is integer.
struct Sprite {
  int w = 0, h = 0;
  std::vector<Rgb> rgb;
  std::vector<std::uint8_t> mask;

  Sprite(int width, int height)
      : w(width), h(height), rgb(std::size_t(width) * height, Rgb{0, 0, 0}),
        mask(std::size_t(width) * height, 0) {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || x >= w || y < 0 || y >= h)
      return;
    rgb[std::size_t(y) * w + x] = c;
    mask[std::size_t(y) * w + x] = 1;
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) { // inclusive corners
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        set(x, y, c);
  }

  void fill_circle(int cx, int cy, int r, Rgb c) {
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy <= r * r)
          set(cx + dx, cy + dy, c);
  }

  void ring(int cx, int cy, int r, Rgb c) {
    int inner = (r - 1) * (r - 1);
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        int d2 = dx * dx + dy * dy;
        if (d2 <= r * r && d2 > inner)
          set(cx + dx, cy + dy, c);
      }
  }

  void line(int x0, int y0, int x1, int y1, Rgb c) { // Bresenham
    int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1)
        return;
      int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

std::uint8_t jitter_u8(int base, int j) {
  return std::uint8_t(std::clamp(base + j, 0, 255));
}

constexpr Rgb kWheel = {30, 30, 34};
constexpr Rgb kWindow = {205, 220, 232};
constexpr Rgb kHead = {224, 178, 140};

Sprite draw_car(int s, int j) {
  const int w = s, h = std::max(6, s / 2);
  Sprite sp(w, h);
  const Rgb body = {jitter_u8(185, j), jitter_u8(34, j / 2), jitter_u8(38, j / 2)};
  const int r = std::max(1, h / 5);
  const int cab_top = 0, cab_bot = h / 3;
  sp.fill_rect(w / 5, cab_top, w - 1 - w / 5, cab_bot, body); // cabin
  if (cab_bot - cab_top >= 2 && w >= 10)
    sp.fill_rect(w / 4, cab_top + 1, w - 1 - w / 4, cab_bot - 1, kWindow);
  sp.fill_rect(0, cab_bot, w - 1, h - 1 - r, body); // body
  sp.fill_circle(w / 4, h - 1 - r, r, kWheel);
  sp.fill_circle(w - 1 - w / 4, h - 1 - r, r, kWheel);
  return sp;
}

Sprite draw_bus(int s, int j) {
  const int w = s, h = std::max(8, (2 * s) / 3);
  Sprite sp(w, h);
  const Rgb body = {jitter_u8(222, j), jitter_u8(174, j), jitter_u8(28, j / 2)};
  const int r = std::max(1, h / 6);
  sp.fill_rect(0, 0, w - 1, h - 1 - r, body);
  const int win_top = std::max(1, h / 6), win_bot = win_top + std::max(1, h / 5);
  for (int x = 2; x + 2 < w; x += 4)
    sp.fill_rect(x, win_top, x + 1, win_bot, kWindow);
  sp.fill_circle(w / 5, h - 1 - r, r, kWheel);
  sp.fill_circle(w - 1 - w / 5, h - 1 - r, r, kWheel);
  return sp;
}

Sprite draw_person(int s, int j) {
  const int h = s, w = std::max(4, s / 3);
  Sprite sp(w, h);
  const Rgb body = {jitter_u8(42, j / 2), jitter_u8(52, j / 2), jitter_u8(150, j)};
  const int rh = std::max(1, (w - 1) / 2);
  sp.fill_circle(w / 2, rh, rh, kHead);
  sp.fill_rect(w / 6, 2 * rh + 1, w - 1 - w / 6, h - 1, body);
  return sp;
}

Sprite draw_bicycle(int s, int j) {
  const int w = s, h = std::max(8, (3 * s) / 5);
  Sprite sp(w, h);
  const Rgb frame = {jitter_u8(28, j / 3), jitter_u8(28, j / 3), jitter_u8(34, j / 3)};
  const int r = std::max(2, h / 2 - 1);
  const int ly = h - 1 - r, lx = r, rx = w - 1 - r;
  sp.ring(lx, ly, r, frame);
  sp.ring(rx, ly, r, frame);
  sp.line(lx, ly, w / 2, 1, frame);
  sp.line(rx, ly, w / 2, 1, frame);
  sp.line(lx, ly, rx, ly, frame);
  sp.line(w / 2 - std::max(1, w / 10), 0, w / 2 + std::max(1, w / 10), 0, frame);
  return sp;
}

Sprite draw_object(int class_id, int scale, int jitter) {
  switch (class_id) {
  case 0:
    return draw_car(scale, jitter);
  case 1:
    return draw_bus(scale, jitter);
  case 2:
    return draw_person(scale, jitter);
  case 3:
    return draw_bicycle(scale, jitter);
  default:
    throw ContractError("draw_object: class_id out of range");
  }
}

BBox tight_bounds(const PlacedObject& obj) {
  int minx = obj.w, miny = obj.h, maxx = -1, maxy = -1;
  for (int y = 0; y < obj.h; ++y)
    for (int x = 0; x < obj.w; ++x)
      if (obj.mask[std::size_t(y) * obj.w + x]) {
        minx = std::min(minx, x);
        miny = std::min(miny, y);
        maxx = std::max(maxx, x);
        maxy = std::max(maxy, y);
      }
  if (maxx < 0)
    throw GenerationError("empty object silhouette");
  return BBox{double(obj.x + minx), double(obj.y + miny), double(obj.x + maxx + 1),
              double(obj.y + maxy + 1)};
}

} // namespace

RenderedScene render_scene(const SceneSpec& spec, int index) {
  spec.validate();
  const int S = spec.image_size;
  Rng rng(spec.seed, hash_mix(hash64("scene"), std::uint64_t(index)));

  const int count = rng.uniform_int(spec.objects_min, spec.objects_max);
  RenderedScene scene;
  std::vector<std::vector<Rgb>> sprite_colors;

  // Placement with a visibility budget: later objects occlude earlier ones,
  // and every earlier object must keep >= 40% of its silhouette visible.
  std::vector<int> owner(std::size_t(S) * S, -1);
  std::vector<int> total_px, visible_px;

  for (int k = 0; k < count; ++k) {
    const int class_id = int(rng.next_below(4));
    const int scale = rng.uniform_int(spec.scale_min[std::size_t(class_id)],
                                      spec.scale_max[std::size_t(class_id)]);
    const int jitter = rng.uniform_int(-16, 16);
    Sprite sp = draw_object(class_id, scale, jitter);

    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      const int ox = rng.uniform_int(0, S - sp.w);
      const int oy = rng.uniform_int(0, S - sp.h);

      // how many currently-visible pixels of each earlier object we'd cover
      std::vector<int> covered(scene.objects.size(), 0);
      for (int y = 0; y < sp.h; ++y)
        for (int x = 0; x < sp.w; ++x) {
          if (!sp.mask[std::size_t(y) * sp.w + x])
            continue;
          int prev = owner[std::size_t(oy + y) * S + (ox + x)];
          if (prev >= 0)
            ++covered[std::size_t(prev)];
        }
      bool ok = true;
      for (std::size_t j = 0; j < covered.size(); ++j)
        if ((visible_px[j] - covered[j]) * 10 < total_px[j] * 4) {
          ok = false;
          break;
        }
      if (!ok)
        continue;

      for (std::size_t j = 0; j < covered.size(); ++j)
        visible_px[j] -= covered[j];
      int own = 0;
      for (int y = 0; y < sp.h; ++y)
        for (int x = 0; x < sp.w; ++x)
          if (sp.mask[std::size_t(y) * sp.w + x]) {
            owner[std::size_t(oy + y) * S + (ox + x)] = int(scene.objects.size());
            ++own;
          }
      total_px.push_back(own);
      visible_px.push_back(own);

      PlacedObject obj;
      obj.class_id = class_id;
      obj.x = ox;
      obj.y = oy;
      obj.w = sp.w;
      obj.h = sp.h;
      obj.mask = sp.mask;
      scene.objects.push_back(std::move(obj));
      scene.annotations.push_back(
          Annotation{tight_bounds(scene.objects.back()), class_id, false});
      sprite_colors.push_back(std::move(sp.rgb));
      placed = true;
    }
    if (!placed)
      throw GenerationError("scene " + std::to_string(index) + ": object " +
                            std::to_string(k) + " could not be placed");
  }

  // paint: background bands + speckle, then objects in draw order
  Image img = Image::create(S, S);
  Rng noise(spec.seed, hash_mix(hash64("background"), std::uint64_t(index)));
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const auto& base = y < spec.horizon ? spec.sky : spec.road;
      const int dn = spec.noise_amp > 0 ? noise.uniform_int(-spec.noise_amp, spec.noise_amp) : 0;
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = std::clamp(int(base[std::size_t(c)]) + dn, 0, 255) / 255.0;
    }
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const PlacedObject& obj = scene.objects[k];
    const std::vector<Rgb>& colors = sprite_colors[k];
    for (int y = 0; y < obj.h; ++y)
      for (int x = 0; x < obj.w; ++x)
        if (obj.mask[std::size_t(y) * obj.w + x]) {
          const Rgb c = colors[std::size_t(y) * obj.w + x];
          img.at(obj.x + x, obj.y + y, 0) = c.r / 255.0;
          img.at(obj.x + x, obj.y + y, 1) = c.g / 255.0;
          img.at(obj.x + x, obj.y + y, 2) = c.b / 255.0;
        }
  }
  scene.image = std::move(img);
  return scene;
}

DatasetManifest generate_dataset(const SceneSpec& spec, int n,
                                 const std::filesystem::path& out_dir) {
  if (n < 0)
    throw ConfigError("generate_dataset: n must be >= 0");
  spec.validate();
  DatasetManifest m;
  m.classes = ClassSet::canonical();
  m.provenance = "scenegen(seed=" + std::to_string(spec.seed) +
                 ",n=" + std::to_string(n) + ")";
  if (n == 0)
    return m;
  std::filesystem::create_directories(out_dir);
  for (int i = 0; i < n; ++i) {
    RenderedScene scene = render_scene(spec, i);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05d.ppm", i);
    write_ppm(scene.image, out_dir / name);
    ImageRecord rec;
    rec.image_path = name;
    rec.width = spec.image_size;
    rec.height = spec.image_size;
    rec.condition = "clean";
    rec.annotations = std::move(scene.annotations);
    m.records.push_back(std::move(rec));
  }
  write_manifest(m, out_dir / "manifest.txt");
  return m;
}

} // namespace wbh

#include "wbh/corruption.hpp"

#include <algorithm>
#include <cmath>

#include "wbh/blur.hpp"
#include "wbh/error.hpp"
#include "wbh/rng.hpp"

namespace wbh {

const char* CorruptionSpec::kind_name() const {
  switch (kind) {
  case Kind::double_gaussian:
    return "double_gaussian";
  case Kind::fog:
    return "fog";
  case Kind::rain:
    return "rain";
  case Kind::snow:
    return "snow";
  case Kind::sand:
    return "sand";
  }
  return "?";
}

CorruptionSpec::Kind CorruptionSpec::kind_from_name(const std::string& name) {
  if (name == "double_gaussian")
    return Kind::double_gaussian;
  if (name == "fog")
    return Kind::fog;
  if (name == "rain")
    return Kind::rain;
  if (name == "snow")
    return Kind::snow;
  if (name == "sand")
    return Kind::sand;
  throw ConfigError("unknown corruption kind: '" + name + "'");
}

void CorruptionSpec::validate() const {
  auto in01 = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  switch (kind) {
  case Kind::double_gaussian:
    if (!(sigma1 >= 0.0) || !(sigma2 >= 0.0) || !std::isfinite(sigma1) ||
        !std::isfinite(sigma2))
      throw ConfigError("double_gaussian: sigmas must be finite and >= 0");
    break;
  case Kind::fog:
    if (!in01(fog_density) || !in01(airlight))
      throw ConfigError("fog: density and airlight must be in [0,1]");
    break;
  case Kind::rain:
    if (streak_count < 0 || streak_length < 1 || !in01(streak_alpha))
      throw ConfigError("rain: bad streak parameters");
    break;
  case Kind::snow:
    if (flake_count < 0 || flake_radius < 0)
      throw ConfigError("snow: bad flake parameters");
    break;
  case Kind::sand:
    if (!in01(tint[0]) || !in01(tint[1]) || !in01(tint[2]) ||
        !(sand_sigma >= 0.0) || !std::isfinite(sand_sigma))
      throw ConfigError("sand: tint must be in [0,1], sigma >= 0");
    break;
  }
}

namespace {

void blend_pixel(Image& img, int x, int y, double alpha, const double color[3]) {
  if (x < 0 || x >= img.width || y < 0 || y >= img.height)
    return;
  for (int c = 0; c < 3; ++c) {
    double& p = img.at(x, y, c);
    p = (1.0 - alpha) * p + alpha * color[c];
  }
}

Image render_fog(const Image& img, const CorruptionSpec& s) {
  Image out = img;
  const double t = s.fog_density, L = s.airlight;
  for (double& p : out.pixels)
    p = (1.0 - t) * p + t * L;
  out.clamp01();
  return out;
}

Image render_rain(const Image& img, const CorruptionSpec& s) {
  Image out = img;
  Rng rng(s.seed, hash64("rain"));
  static constexpr double kColor[3] = {0.88, 0.90, 0.93};
  for (int i = 0; i < s.streak_count; ++i) {
    int x0 = rng.uniform_int(0, img.width - 1);
    int y0 = rng.uniform_int(-s.streak_length + 1, img.height - 1);
    int slant = rng.uniform_int(-1, 1); // pixels of drift per 3 rows
    for (int step = 0; step < s.streak_length; ++step)
      blend_pixel(out, x0 + slant * (step / 3), y0 + step, s.streak_alpha, kColor);
  }
  out.clamp01();
  return out;
}

Image render_snow(const Image& img, const CorruptionSpec& s) {
  Image out = img;
  Rng rng(s.seed, hash64("snow"));
  static constexpr double kColor[3] = {0.95, 0.95, 0.96};
  static constexpr double kAlpha = 0.85;
  for (int i = 0; i < s.flake_count; ++i) {
    int cx = rng.uniform_int(0, img.width - 1);
    int cy = rng.uniform_int(0, img.height - 1);
    int r = s.flake_radius;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy <= r * r)
          blend_pixel(out, cx + dx, cy + dy, kAlpha, kColor);
  }
  out.clamp01();
  return out;
}

Image render_sand(const Image& img, const CorruptionSpec& s) {
  Image tinted = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        tinted.at(x, y, c) *= s.tint[c];
  return convolve_separable(tinted, gaussian_kernel(s.sand_sigma));
}

} // namespace

Image apply_corruption(const Image& img, const CorruptionSpec& spec) {
  spec.validate();
  switch (spec.kind) {
  case CorruptionSpec::Kind::double_gaussian:
    return double_gaussian_blur(img, spec.sigma1, spec.sigma2);
  case CorruptionSpec::Kind::fog:
    return render_fog(img, spec);
  case CorruptionSpec::Kind::rain:
    return render_rain(img, spec);
  case CorruptionSpec::Kind::snow:
    return render_snow(img, spec);
  case CorruptionSpec::Kind::sand:
    return render_sand(img, spec);
  }
  throw ConfigError("apply_corruption: unknown kind");
}

DatasetManifest corrupt_dataset(const DatasetManifest& m,
                                const std::filesystem::path& base_dir,
                                std::span<const CorruptionSpec> chain,
                                const std::filesystem::path& out_dir) {
  if (chain.empty())
    throw ConfigError("corrupt_dataset: empty corruption chain");
  for (const CorruptionSpec& s : chain)
    s.validate();

  std::string tag = "corrupted:";
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (i)
      tag += '+';
    tag += chain[i].kind_name();
  }

  DatasetManifest out;
  out.classes = m.classes;
  out.provenance = tag + "(seed=" + std::to_string(chain[0].seed) + ") of [" +
                   m.provenance + "]";
  if (m.records.empty())
    return out;

  std::filesystem::create_directories(out_dir);
  std::string failures;
  for (const ImageRecord& rec : m.records) {
    std::filesystem::path out_name = std::filesystem::path(rec.image_path).filename();
    try {
      Image img = read_ppm(resolve_image_path(base_dir, rec));
      const std::uint64_t path_key = hash64(rec.image_path);
      for (const CorruptionSpec& s : chain) {
        CorruptionSpec keyed = s;
        keyed.seed = hash_mix(s.seed, path_key);
        img = apply_corruption(img, keyed);
      }
      write_ppm(img, out_dir / out_name);
    } catch (const Error& e) {
      failures += std::string("  ") + rec.image_path + ": " + e.what() + "\n";
      continue;
    }
    ImageRecord r = rec;
    r.image_path = out_name.string();
    r.condition = tag;
    out.records.push_back(std::move(r));
  }
  if (!failures.empty())
    throw IoError("corrupt_dataset: failures:\n" + failures);
  return out;
}

DatasetManifest corrupt_dataset(const DatasetManifest& m,
                                const std::filesystem::path& base_dir,
                                const CorruptionSpec& spec,
                                const std::filesystem::path& out_dir) {
  return corrupt_dataset(m, base_dir, std::span<const CorruptionSpec>(&spec, 1),
                         out_dir);
}

} // namespace wbh

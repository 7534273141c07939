#pragma once

#include <cassert>
#include <filesystem>
#include <vector>

namespace wbh {

/// Dense H x W x 3 raster, row-major, intensities in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels; // height * width * 3

  static Image create(int w, int h, double fill = 0.0) {
    Image img;
    img.width = w;
    img.height = h;
    img.pixels.assign(std::size_t(w) * std::size_t(h) * 3, fill);
    return img;
  }

  double& at(int x, int y, int c) {
    assert(x >= 0 && x < width && y >= 0 && y < height && c >= 0 && c < 3);
    return pixels[(std::size_t(y) * width + x) * 3 + c];
  }
  double at(int x, int y, int c) const {
    assert(x >= 0 && x < width && y >= 0 && y < height && c >= 0 && c < 3);
    return pixels[(std::size_t(y) * width + x) * 3 + c];
  }

  void clamp01() {
    for (double& v : pixels)
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  }
};

/// Binary PPM (P6, maxval 255). Round trip is exact up to 8-bit quantization.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& img, const std::filesystem::path& path);

} // namespace wbh

#include "wbh/blur.hpp"

#include <algorithm>
#include <cmath>

#include "wbh/error.hpp"

namespace wbh {

Kernel1D gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw ConfigError("gaussian_kernel: sigma must be finite and >= 0");
  return gaussian_kernel(sigma, sigma == 0.0 ? 0 : int(std::ceil(3.0 * sigma)));
}

Kernel1D gaussian_kernel(double sigma, int radius) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw ConfigError("gaussian_kernel: sigma must be finite and >= 0");
  if (radius < 0)
    throw ConfigError("gaussian_kernel: radius must be >= 0");
  Kernel1D k;
  k.radius = radius;
  k.weights.assign(std::size_t(2 * radius + 1), 0.0);
  if (radius == 0 || sigma == 0.0) {
    k.radius = 0;
    k.weights = {1.0};
    return k;
  }
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double w = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
    k.weights[std::size_t(i + radius)] = w;
    sum += w;
  }
  for (double& w : k.weights)
    w /= sum;
  return k;
}

namespace {

// one horizontal pass over a single channel plane, edge replication
void pass_horizontal(const Image& src, Image& dst, const Kernel1D& k) {
  const int w = src.width, h = src.height, r = k.radius;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int i = -r; i <= r; ++i) {
        int xs = std::clamp(x + i, 0, w - 1);
        double wk = k.weights[std::size_t(i + r)];
        const double* p = &src.pixels[(std::size_t(y) * w + xs) * 3];
        acc[0] += wk * p[0];
        acc[1] += wk * p[1];
        acc[2] += wk * p[2];
      }
      double* q = &dst.pixels[(std::size_t(y) * w + x) * 3];
      q[0] = acc[0];
      q[1] = acc[1];
      q[2] = acc[2];
    }
  }
}

void pass_vertical(const Image& src, Image& dst, const Kernel1D& k) {
  const int w = src.width, h = src.height, r = k.radius;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int i = -r; i <= r; ++i) {
        int ys = std::clamp(y + i, 0, h - 1);
        double wk = k.weights[std::size_t(i + r)];
        const double* p = &src.pixels[(std::size_t(ys) * w + x) * 3];
        acc[0] += wk * p[0];
        acc[1] += wk * p[1];
        acc[2] += wk * p[2];
      }
      double* q = &dst.pixels[(std::size_t(y) * w + x) * 3];
      q[0] = acc[0];
      q[1] = acc[1];
      q[2] = acc[2];
    }
  }
}

} // namespace

Image convolve_separable(const Image& img, const Kernel1D& k) {
  if (k.weights.size() != std::size_t(2 * k.radius + 1))
    throw ContractError("convolve_separable: kernel weight count mismatch");
  Image tmp = Image::create(img.width, img.height);
  Image out = Image::create(img.width, img.height);
  pass_horizontal(img, tmp, k);
  pass_vertical(tmp, out, k);
  out.clamp01();
  return out;
}

Image double_gaussian_blur(const Image& img, double sigma1, double sigma2) {
  Image first = convolve_separable(img, gaussian_kernel(sigma1));
  return convolve_separable(first, gaussian_kernel(sigma2));
}

} // namespace wbh

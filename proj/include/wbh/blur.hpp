#pragma once

#include <vector>

#include "wbh/image.hpp"

namespace wbh {

/// Symmetric normalized 1D kernel with 2*radius+1 weights.
struct Kernel1D {
  int radius = 0;
  std::vector<double> weights; // sums to 1, symmetric about center
};

/// Gaussian kernel truncated at radius ceil(3*sigma). sigma == 0 yields the
/// identity kernel [1].
Kernel1D gaussian_kernel(double sigma);

/// Gaussian kernel with an explicit truncation radius.
Kernel1D gaussian_kernel(double sigma, int radius);

/// Separable convolution: horizontal then vertical pass per channel, edge
/// replication at the boundary, output clamped to [0,1].
Image convolve_separable(const Image& img, const Kernel1D& k);

/// Two sequential separable Gaussian blurs (sigma1 then sigma2).
Image double_gaussian_blur(const Image& img, double sigma1, double sigma2);

} // namespace wbh

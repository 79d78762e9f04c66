#pragma once

#include <vector>

#include "ctxf/image.hpp"

namespace ctxf {

/// Single-channel plane for the wavelet code.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0)
      : width(w), height(h), v(static_cast<std::size_t>(w) * h, fill) {}
  double& at(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] double at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
};

/// Multi-level periodized 2-D DWT with the orthonormal Daubechies 8-tap
/// filter, stored in place Mallat-style (approximation in the top-left
/// corner). Width and height must be divisible by 2^levels.
Plane dwt2(const Plane& x, int levels);
Plane idwt2(const Plane& coeffs, int levels);

/// Local Wiener shrinkage of every detail subband: per-coefficient signal
/// variance max(0, mean(c^2 over a w x w window) - sigma0^2), minimised over
/// w in {3, 5, 7, 9}, scaled by var / (var + sigma0^2).
Plane wavelet_denoise(const Plane& x, int levels, double sigma0);

/// x - W(x). The plane is edge-padded to a multiple of 2^levels before the
/// transform and cropped back afterwards.
Plane noise_residual(const Plane& x, int levels, double sigma0);

}  // namespace ctxf

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctxf/image.hpp"
#include "ctxf/ks.hpp"

namespace ctxf {

struct ComparatorConfig {
  double sigma_g = 4.0;
  int prnu_block = 64;
  int prnu_stride = 8;
  int prnu_wavelet_levels = 4;
  double prnu_sigma0 = 3.0 / 255.0;
  int ssim_radius = 32;
  int hist_radius = 13;
  int hist_stride = 4;
  bool hsvks_stephens = false;
  int pm_patch = 8;
  int pm_stride = 4;
  int pm_iters = 20;
  double pm_min_scale = 0.5;
  double pm_max_scale = 2.0;
  /// Also score the identity state at initialisation (P and C are already
  /// registered, so identity is the natural prior).
  bool pm_identity_prior = true;
  /// Evaluate KS, PRNU blocks and PatchMatch patches at stride 1.
  bool full_density = false;
  std::uint64_t seed = 0;

  /// Throws ParameterError unless every size/scale is strictly positive.
  void validate() const;
};

enum class Method { Irpsnr, Prnu, Ssim, HsvKs, PatchMatch };

std::string_view method_name(Method m);
/// Accepts irpsnr, prnu, ssim, hsvks, patchmatch. Throws ParameterError.
Method method_from_name(std::string_view name);
const std::vector<Method>& all_methods();

/// Negate when `flip`, then min-max rescale valid scores to [0,1]; a
/// constant map becomes 0.5. Throws ComparatorError without valid pixels.
HeatMap normalize_polarity(const HeatMap& raw, bool flip);

/// log10(1 / (d^2 + 1)).
double irpsnr_from_difference(double d);

// Raw maps in each method's native polarity. Invalid pixels of either
// input (P's or C's valid mask) are excluded.
HeatMap irpsnr_raw(const Image& p, const Image& c, const ComparatorConfig& cfg = {});
HeatMap prnu_raw(const Image& p, const Image& c, const ComparatorConfig& cfg = {});
HeatMap ssim_raw(const Image& p, const Image& c, const ComparatorConfig& cfg = {});
HeatMap hsvks_raw(const Image& p, const Image& c, const ComparatorConfig& cfg = {});
HeatMap patchmatch_raw(const Image& p, const Image& c, const ComparatorConfig& cfg = {});

/// Raw map of `m` plus whether it must be flipped to be tamper-positive.
HeatMap compare_raw(Method m, const Image& p, const Image& c, const ComparatorConfig& cfg = {});
bool flips_polarity(Method m);

/// Normalized, tamper-positive heat map.
HeatMap compare(Method m, const Image& p, const Image& c, const ComparatorConfig& cfg = {});

/// Per-block normalized correlation of two residual planes over pixels valid
/// in `valid` (one byte per pixel, may be empty). `out_valid` marks blocks
/// with at least half their pixels valid and nonzero energy in both.
struct BlockGrid {
  std::vector<int> xs;  // block top-left x positions
  std::vector<int> ys;
  std::vector<double> ncc;  // row-major ys.size() x xs.size()
  std::vector<std::uint8_t> valid;
};
BlockGrid block_ncc(const std::vector<double>& a, const std::vector<double>& b,
                    const std::vector<std::uint8_t>& valid, int width, int height, int block,
                    int stride);

/// Bilinear upsampling of a value grid sampled at pixel centres (xs, ys) to
/// a width x height map. Invalid grid nodes are excluded by renormalising
/// the weights; pixels with no valid contributing node are invalid.
HeatMap upsample_grid(const std::vector<double>& values, const std::vector<std::uint8_t>& valid,
                      const std::vector<double>& xs, const std::vector<double>& ys, int width,
                      int height);

/// Evaluation positions 0, stride, 2 stride, ... plus `last` if missed.
std::vector<int> grid_positions(int last, int stride);

}  // namespace ctxf

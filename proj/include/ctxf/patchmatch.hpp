#pragma once

#include <vector>

#include "ctxf/comparators.hpp"
#include "ctxf/image.hpp"

namespace ctxf {

/// Similarity state of one patch: its centre maps to centre + (dx, dy) in C,
/// offsets within the patch are rotated by theta and scaled by s.
struct PatchState {
  double dx = 0.0;
  double dy = 0.0;
  double theta = 0.0;
  double s = 1.0;
};

struct NnfResult {
  int patch = 8;
  std::vector<int> xs;  // patch top-left x positions
  std::vector<int> ys;
  std::vector<PatchState> states;  // row-major over (ys, xs)
  std::vector<double> costs;       // mean squared difference; kRejected when unusable
  std::vector<std::uint8_t> usable;  // P patch has <= 25% invalid pixels
  /// Mean cost over usable patches after initialisation and after each iteration.
  std::vector<double> mean_cost_history;
};

/// Generalized PatchMatch from P's patches into C over translation,
/// rotation in [-pi, pi] and scale in [cfg.pm_min_scale, cfg.pm_max_scale].
/// States that leave more than 25% of a patch unsampled cost
/// `channels + 1`, above any valid cost.
NnfResult patchmatch_nnf(const Image& p, const Image& c, const ComparatorConfig& cfg);

/// Cost of a single state (exposed for oracles).
double patch_cost(const Image& p, const Image& c, int x0, int y0, int patch, const PatchState& st);

}  // namespace ctxf

#include "ctxf/patchmatch.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <limits>
#include <numbers>

#include "ctxf/error.hpp"
#include "ctxf/rng.hpp"

namespace ctxf {

namespace {

constexpr double kMaxInvalidFraction = 0.25;
constexpr double kMinSearchWindow = 0.05;  // px

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a - std::numbers::pi;
}

// Bilinear sample of every channel; false outside the sample grid or on an
// invalid contributing pixel.
template <bool kMasked>
inline bool sample_all(const Image& img, double x, double y, double* out) {
  constexpr double kSlack = 1e-9;
  if (!(x >= -kSlack && x <= img.width - 1 + kSlack && y >= -kSlack && y <= img.height - 1 + kSlack)) {
    return false;
  }
  const double xc = std::clamp(x, 0.0, img.width - 1.0);
  const double yc = std::clamp(y, 0.0, img.height - 1.0);
  const int x0 = static_cast<int>(xc), y0 = static_cast<int>(yc);
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = xc - x0, fy = yc - y0;
  if constexpr (kMasked) {
    if (!img.is_valid(x0, y0)) return false;
    if (fx > 0.0 && !img.is_valid(x1, y0)) return false;
    if (fy > 0.0 && !img.is_valid(x0, y1)) return false;
    if (fx > 0.0 && fy > 0.0 && !img.is_valid(x1, y1)) return false;
  }
  const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy), w01 = (1 - fx) * fy, w11 = fx * fy;
  const int ch = img.channels;
  const double* r0 = &img.data[(static_cast<std::size_t>(y0) * img.width) * ch];
  const double* r1 = &img.data[(static_cast<std::size_t>(y1) * img.width) * ch];
  for (int c = 0; c < ch; ++c) {
    out[c] = w00 * r0[x0 * ch + c] + w10 * r0[x1 * ch + c] + w01 * r1[x0 * ch + c] + w11 * r1[x1 * ch + c];
  }
  return true;
}

// Mean squared difference; returns `rejected` when too many samples are
// missing and gives up early (returning a value above `bound`) once the
// mean is certain to exceed `bound`.
template <bool kMasked>
double cost_impl(const Image& p, const Image& c, int x0, int y0, int patch, const PatchState& st, double bound,
                 double rejected) {
  const double cx = x0 + (patch - 1) / 2.0, cy = y0 + (patch - 1) / 2.0;
  const double cs = st.s * std::cos(st.theta), sn = st.s * std::sin(st.theta);
  const int total = patch * patch;
  const int max_invalid = static_cast<int>(std::floor(kMaxInvalidFraction * total));
  const double early = bound * total;
  const int ch = p.channels;
  double sample[4];
  double sum = 0.0;
  int invalid = 0;
  for (int v = 0; v < patch; ++v) {
    const int py = y0 + v;
    const double oy = py - cy;
    // Sample position for u = 0, advanced by (cs, sn) per column.
    double sx = cx + st.dx - cs * (cx - x0) - sn * oy;
    double sy = cy + st.dy - sn * (cx - x0) + cs * oy;
    const double* pv = &p.data[(static_cast<std::size_t>(py) * p.width + x0) * ch];
    for (int u = 0; u < patch; ++u, sx += cs, sy += sn, pv += ch) {
      if ((kMasked && !p.is_valid(x0 + u, py)) || !sample_all<kMasked>(c, sx, sy, sample)) {
        if (++invalid > max_invalid) return rejected;
        continue;
      }
      for (int k = 0; k < ch; ++k) {
        const double d = pv[k] - sample[k];
        sum += d * d;
      }
      if (sum > early) return sum / (total - invalid);
    }
  }
  return sum / (total - invalid);
}

double cost_bounded(const Image& p, const Image& c, int x0, int y0, int patch, const PatchState& st,
                    double bound, double rejected) {
  if (p.has_mask() || c.has_mask()) return cost_impl<true>(p, c, x0, y0, patch, st, bound, rejected);
  return cost_impl<false>(p, c, x0, y0, patch, st, bound, rejected);
}

}  // namespace

double patch_cost(const Image& p, const Image& c, int x0, int y0, int patch, const PatchState& st) {
  return cost_bounded(p, c, x0, y0, patch, st, std::numeric_limits<double>::infinity(), p.channels + 1.0);
}

NnfResult patchmatch_nnf(const Image& p, const Image& c, const ComparatorConfig& cfg) {
  cfg.validate();
  if (!p.same_size(c) || p.channels != c.channels) {
    throw ComparatorError("patchmatch: probe and candidate differ in size or channels");
  }
  const int patch = cfg.pm_patch;
  if (p.width < patch || p.height < patch) throw ComparatorError("patchmatch: image smaller than one patch");
  const int stride = cfg.full_density ? 1 : cfg.pm_stride;
  const double rejected = p.channels + 1.0;

  NnfResult r;
  r.patch = patch;
  r.xs = grid_positions(p.width - patch, stride);
  r.ys = grid_positions(p.height - patch, stride);
  const std::size_t nx = r.xs.size(), ny = r.ys.size(), n = nx * ny;
  r.states.resize(n);
  r.costs.assign(n, rejected);
  r.usable.assign(n, 0);

  const int max_invalid = static_cast<int>(std::floor(kMaxInvalidFraction * patch * patch));
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      int invalid = 0;
      for (int y = r.ys[j]; y < r.ys[j] + patch; ++y) {
        for (int x = r.xs[i]; x < r.xs[i] + patch; ++x) invalid += !p.is_valid(x, y);
      }
      r.usable[j * nx + i] = invalid <= max_invalid;
    }
  }

  auto mean_cost = [&] {
    double s = 0.0;
    std::size_t k = 0;
    for (std::size_t t = 0; t < n; ++t) {
      if (!r.usable[t]) continue;
      s += r.costs[t];
      ++k;
    }
    return k ? s / static_cast<double>(k) : 0.0;
  };

  Rng rng = make_rng(cfg.seed, "patchmatch");
  const double log_lo = std::log(cfg.pm_min_scale), log_hi = std::log(cfg.pm_max_scale);
  const double half = (patch - 1) / 2.0;
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t k = j * nx + i;
      const double cx = r.xs[i] + half, cy = r.ys[j] + half;
      PatchState st;
      st.dx = uniform(rng, 0.0, c.width - 1.0) - cx;
      st.dy = uniform(rng, 0.0, c.height - 1.0) - cy;
      st.theta = uniform(rng, -std::numbers::pi, std::numbers::pi);
      st.s = std::exp(uniform(rng, log_lo, log_hi));
      if (!r.usable[k]) continue;
      r.states[k] = st;
      r.costs[k] = cost_bounded(p, c, r.xs[i], r.ys[j], patch, st, rejected, rejected);
      if (cfg.pm_identity_prior && cfg.pm_min_scale <= 1.0 && cfg.pm_max_scale >= 1.0) {
        const PatchState id{};
        const double ci = cost_bounded(p, c, r.xs[i], r.ys[j], patch, id, r.costs[k], rejected);
        if (ci <= r.costs[k]) {
          r.states[k] = id;
          r.costs[k] = ci;
        }
      }
    }
  }
  r.mean_cost_history.push_back(mean_cost());

  auto try_state = [&](std::size_t k, std::size_t i, std::size_t j, const PatchState& cand) {
    const double cost = cost_bounded(p, c, r.xs[i], r.ys[j], patch, cand, r.costs[k], rejected);
    if (cost < r.costs[k]) {
      r.costs[k] = cost;
      r.states[k] = cand;
    }
  };

  const double max_window = std::max(p.width, p.height);
  const double scale_window = 0.5 * (log_hi - log_lo);
  const double rim = std::max(1.0, half * std::numbers::sqrt2 * cfg.pm_max_scale);
  for (int it = 0; it < cfg.pm_iters; ++it) {
    const bool forward = it % 2 == 0;
    for (std::size_t step = 0; step < n; ++step) {
      const std::size_t k = forward ? step : n - 1 - step;
      if (!r.usable[k]) continue;
      const std::size_t j = k / nx, i = k % nx;
      const double cx = r.xs[i] + half, cy = r.ys[j] + half;

      // Propagation: adopt the neighbour's similarity, carried across the
      // offset between the two patch centres.
      const std::array<std::pair<long, long>, 2> nbrs =
          forward ? std::array<std::pair<long, long>, 2>{{{-1, 0}, {0, -1}}}
                  : std::array<std::pair<long, long>, 2>{{{1, 0}, {0, 1}}};
      for (const auto& [ox, oy] : nbrs) {
        const long ni = static_cast<long>(i) + ox, nj = static_cast<long>(j) + oy;
        if (ni < 0 || nj < 0 || ni >= static_cast<long>(nx) || nj >= static_cast<long>(ny)) continue;
        const std::size_t nk = static_cast<std::size_t>(nj) * nx + static_cast<std::size_t>(ni);
        if (!r.usable[nk] || r.costs[nk] >= rejected) continue;
        const PatchState& ns = r.states[nk];
        const double ncx = r.xs[static_cast<std::size_t>(ni)] + half;
        const double ncy = r.ys[static_cast<std::size_t>(nj)] + half;
        const double ddx = cx - ncx, ddy = cy - ncy;
        const double cs = ns.s * std::cos(ns.theta), sn = ns.s * std::sin(ns.theta);
        PatchState cand = ns;
        cand.dx = ncx + ns.dx + cs * ddx - sn * ddy - cx;
        cand.dy = ncy + ns.dy + sn * ddx + cs * ddy - cy;
        try_state(k, i, j, cand);
      }

      // Random search: windows halve from the full image, and each level
      // perturbs translation, rotation and scale separately. A component
      // stops once its largest displacement at the patch rim drops below
      // the minimum window.
      double wt = max_window, wa = std::numbers::pi, ws = scale_window;
      while (wt >= kMinSearchWindow || wa * rim >= kMinSearchWindow || ws * rim >= kMinSearchWindow) {
        PatchState cand;
        if (wt >= kMinSearchWindow) {
          cand = r.states[k];
          cand.dx += wt * uniform(rng, -1.0, 1.0);
          cand.dy += wt * uniform(rng, -1.0, 1.0);
          try_state(k, i, j, cand);
        }
        if (wa * rim >= kMinSearchWindow) {
          cand = r.states[k];
          cand.theta = wrap_angle(cand.theta + wa * uniform(rng, -1.0, 1.0));
          try_state(k, i, j, cand);
        }
        if (ws * rim >= kMinSearchWindow) {
          cand = r.states[k];
          cand.s = std::clamp(cand.s * std::exp(ws * uniform(rng, -1.0, 1.0)), cfg.pm_min_scale, cfg.pm_max_scale);
          try_state(k, i, j, cand);
        }
        wt *= 0.5;
        wa *= 0.5;
        ws *= 0.5;
      }
    }
    r.mean_cost_history.push_back(mean_cost());
  }
  return r;
}

}  // namespace ctxf

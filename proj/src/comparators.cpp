#include "ctxf/comparators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "ctxf/error.hpp"
#include "ctxf/imaging.hpp"
#include "ctxf/parallel.hpp"
#include "ctxf/patchmatch.hpp"
#include "ctxf/wavelet.hpp"

namespace ctxf {

namespace {

void require_same_size(const Image& p, const Image& c, const char* who) {
  if (!p.same_size(c) || p.empty()) {
    throw ComparatorError(std::string(who) + ": probe and candidate differ in size");
  }
}

std::vector<std::uint8_t> overlap_mask(const Image& p, const Image& c) {
  std::vector<std::uint8_t> m(p.pixel_count(), 1);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = p.is_valid(i) && c.is_valid(i);
  return m;
}

Image luminance_with_mask(const Image& img, const std::vector<std::uint8_t>& mask) {
  Image out = luminance(img);
  out.valid = mask;
  return out;
}

// Summed-area table with a zero guard row and column.
class Integral {
 public:
  Integral(int w, int h) : w_(w), t_(static_cast<std::size_t>(w + 1) * (h + 1), 0.0) {}
  template <typename F>
  void fill(int w, int h, F value) {
    for (int y = 0; y < h; ++y) {
      double row = 0.0;
      for (int x = 0; x < w; ++x) {
        row += value(static_cast<std::size_t>(y) * w + x);
        at(x + 1, y + 1) = at(x + 1, y) + row;
      }
    }
  }
  // Sum over [x0, x1) x [y0, y1).
  [[nodiscard]] double sum(int x0, int y0, int x1, int y1) const {
    return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
  }

 private:
  double& at(int x, int y) { return t_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
  [[nodiscard]] double at(int x, int y) const { return t_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
  int w_;
  std::vector<double> t_;
};

Image as_hsv(const Image& img) {
  if (img.colorspace == ColorSpace::HSV) return img;
  if (img.colorspace == ColorSpace::RGB) return rgb_to_hsv(img);
  Image rgb(img.width, img.height, ColorSpace::RGB);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    for (int ch = 0; ch < 3; ++ch) rgb.data[i * 3 + static_cast<std::size_t>(ch)] = img.data[i];
  }
  rgb.valid = img.valid;
  Image hsv = rgb_to_hsv(rgb);
  hsv.valid = img.valid;
  return hsv;
}

void restrict_to(HeatMap& map, const std::vector<std::uint8_t>& mask) {
  for (std::size_t i = 0; i < map.valid.size(); ++i) {
    if (!mask[i]) {
      map.valid[i] = 0;
      map.scores[i] = 0.0;
    }
  }
}

}  // namespace

void ComparatorConfig::validate() const {
  const bool ok = sigma_g > 0 && prnu_block > 0 && prnu_stride > 0 && prnu_wavelet_levels > 0 &&
                  prnu_sigma0 > 0 && ssim_radius > 0 && hist_radius > 0 && hist_stride > 0 &&
                  pm_patch > 0 && pm_stride > 0 && pm_iters > 0 && pm_min_scale > 0 &&
                  pm_max_scale >= pm_min_scale;
  if (!ok) throw ParameterError("comparator configuration values must be strictly positive");
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Irpsnr: return "irpsnr";
    case Method::Prnu: return "prnu";
    case Method::Ssim: return "ssim";
    case Method::HsvKs: return "hsvks";
    case Method::PatchMatch: return "patchmatch";
  }
  return "?";
}

Method method_from_name(std::string_view name) {
  for (Method m : all_methods()) {
    if (method_name(m) == name) return m;
  }
  throw ParameterError("unknown comparator '" + std::string(name) +
                       "' (expected irpsnr, prnu, ssim, hsvks or patchmatch)");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods{Method::Irpsnr, Method::Prnu, Method::Ssim, Method::HsvKs,
                                           Method::PatchMatch};
  return methods;
}

HeatMap normalize_polarity(const HeatMap& raw, bool flip) {
  HeatMap out = raw;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < out.scores.size(); ++i) {
    if (!out.valid[i]) continue;
    if (!std::isfinite(out.scores[i])) {
      out.valid[i] = 0;
      continue;
    }
    if (flip) out.scores[i] = -out.scores[i];
    lo = std::min(lo, out.scores[i]);
    hi = std::max(hi, out.scores[i]);
  }
  if (!(lo <= hi)) throw ComparatorError("normalize_polarity: heat map has no valid pixels");
  const double range = hi - lo;
  for (std::size_t i = 0; i < out.scores.size(); ++i) {
    if (!out.valid[i]) {
      out.scores[i] = 0.0;
    } else {
      out.scores[i] = range > 0.0 ? (out.scores[i] - lo) / range : 0.5;
    }
  }
  return out;
}

double irpsnr_from_difference(double d) { return std::log10(1.0 / (d * d + 1.0)); }

HeatMap irpsnr_raw(const Image& p, const Image& c, const ComparatorConfig& cfg) {
  require_same_size(p, c, "irpsnr");
  const auto mask = overlap_mask(p, c);
  const Image gp = gaussian_blur(luminance_with_mask(p, mask), cfg.sigma_g);
  const Image gc = gaussian_blur(luminance_with_mask(c, mask), cfg.sigma_g);
  HeatMap out(p.width, p.height);
  for (std::size_t i = 0; i < out.scores.size(); ++i) {
    out.valid[i] = gp.is_valid(i) && gc.is_valid(i);
    out.scores[i] = out.valid[i] ? irpsnr_from_difference(gp.data[i] - gc.data[i]) : 0.0;
  }
  return out;
}

std::vector<int> grid_positions(int last, int stride) {
  std::vector<int> pos;
  if (last < 0) return pos;
  for (int v = 0; v <= last; v += stride) pos.push_back(v);
  if (pos.back() != last) pos.push_back(last);
  return pos;
}

BlockGrid block_ncc(const std::vector<double>& a, const std::vector<double>& b,
                    const std::vector<std::uint8_t>& valid, int width, int height, int block,
                    int stride) {
  auto ok = [&](std::size_t i) { return valid.empty() || valid[i] != 0; };
  Integral sab(width, height), saa(width, height), sbb(width, height), cnt(width, height);
  sab.fill(width, height, [&](std::size_t i) { return ok(i) ? a[i] * b[i] : 0.0; });
  saa.fill(width, height, [&](std::size_t i) { return ok(i) ? a[i] * a[i] : 0.0; });
  sbb.fill(width, height, [&](std::size_t i) { return ok(i) ? b[i] * b[i] : 0.0; });
  cnt.fill(width, height, [&](std::size_t i) { return ok(i) ? 1.0 : 0.0; });

  BlockGrid g;
  g.xs = grid_positions(width - block, stride);
  g.ys = grid_positions(height - block, stride);
  g.ncc.assign(g.xs.size() * g.ys.size(), 0.0);
  g.valid.assign(g.ncc.size(), 0);
  const double min_count = 0.5 * block * block;
  for (std::size_t j = 0; j < g.ys.size(); ++j) {
    for (std::size_t i = 0; i < g.xs.size(); ++i) {
      const int x0 = g.xs[i], y0 = g.ys[j];
      const double n = cnt.sum(x0, y0, x0 + block, y0 + block);
      const double ea = saa.sum(x0, y0, x0 + block, y0 + block);
      const double eb = sbb.sum(x0, y0, x0 + block, y0 + block);
      if (n < min_count || !(ea > 1e-20) || !(eb > 1e-20)) continue;
      const std::size_t k = j * g.xs.size() + i;
      g.ncc[k] = std::clamp(sab.sum(x0, y0, x0 + block, y0 + block) / std::sqrt(ea * eb), -1.0, 1.0);
      g.valid[k] = 1;
    }
  }
  return g;
}

HeatMap upsample_grid(const std::vector<double>& values, const std::vector<std::uint8_t>& valid,
                      const std::vector<double>& xs, const std::vector<double>& ys, int width,
                      int height) {
  HeatMap out(width, height);
  std::fill(out.valid.begin(), out.valid.end(), 0);
  if (xs.empty() || ys.empty()) return out;
  // Per-axis bracketing node pair and weight of the upper node.
  auto bracket = [](const std::vector<double>& nodes, double v, std::size_t& i0, double& f) {
    if (v <= nodes.front()) {
      i0 = 0;
      f = 0.0;
    } else if (v >= nodes.back()) {
      i0 = nodes.size() - 1;
      f = 0.0;
    } else {
      const auto it = std::upper_bound(nodes.begin(), nodes.end(), v);
      i0 = static_cast<std::size_t>(it - nodes.begin()) - 1;
      f = (v - nodes[i0]) / (nodes[i0 + 1] - nodes[i0]);
    }
  };
  const std::size_t nx = xs.size();
  for (int y = 0; y < height; ++y) {
    std::size_t j0;
    double fy;
    bracket(ys, y, j0, fy);
    const std::size_t j1 = std::min(j0 + 1, ys.size() - 1);
    for (int x = 0; x < width; ++x) {
      std::size_t i0;
      double fx;
      bracket(xs, x, i0, fx);
      const std::size_t i1 = std::min(i0 + 1, nx - 1);
      const std::array<std::size_t, 4> k{j0 * nx + i0, j0 * nx + i1, j1 * nx + i0, j1 * nx + i1};
      const std::array<double, 4> w{(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      double acc = 0.0, wsum = 0.0;
      for (std::size_t t = 0; t < 4; ++t) {
        if (w[t] > 0.0 && valid[k[t]]) {
          acc += w[t] * values[k[t]];
          wsum += w[t];
        }
      }
      const std::size_t idx = static_cast<std::size_t>(y) * width + x;
      if (wsum > 0.0) {
        out.scores[idx] = acc / wsum;
        out.valid[idx] = 1;
      }
    }
  }
  return out;
}

HeatMap prnu_raw(const Image& p, const Image& c, const ComparatorConfig& cfg) {
  require_same_size(p, c, "prnu");
  if (p.width < cfg.prnu_block || p.height < cfg.prnu_block) {
    throw ComparatorError("prnu: image smaller than one correlation block");
  }
  const auto mask = overlap_mask(p, c);
  // Invalid pixels are filled with the valid mean so they do not inject
  // artificial edges into the denoiser.
  auto residual = [&](const Image& img) {
    const Image lum = luminance(img);
    double mean = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) {
        mean += lum.data[i];
        ++n;
      }
    }
    mean = n ? mean / static_cast<double>(n) : 0.0;
    Plane plane(img.width, img.height);
    for (std::size_t i = 0; i < mask.size(); ++i) plane.v[i] = mask[i] ? lum.data[i] : mean;
    return noise_residual(plane, cfg.prnu_wavelet_levels, cfg.prnu_sigma0).v;
  };
  const auto rp = residual(p);
  const auto rc = residual(c);
  const int stride = cfg.full_density ? 1 : cfg.prnu_stride;
  const BlockGrid g = block_ncc(rp, rc, mask, p.width, p.height, cfg.prnu_block, stride);
  const double centre = (cfg.prnu_block - 1) / 2.0;
  std::vector<double> xs, ys;
  for (int x : g.xs) xs.push_back(x + centre);
  for (int y : g.ys) ys.push_back(y + centre);
  HeatMap out = upsample_grid(g.ncc, g.valid, xs, ys, p.width, p.height);
  restrict_to(out, mask);
  return out;
}

HeatMap ssim_raw(const Image& p, const Image& c, const ComparatorConfig& cfg) {
  require_same_size(p, c, "ssim");
  constexpr double kRange = 1.0;
  constexpr double c1 = (0.01 * kRange) * (0.01 * kRange);
  constexpr double c2 = (0.03 * kRange) * (0.03 * kRange);
  const auto mask = overlap_mask(p, c);
  const Image lp = luminance(p), lc = luminance(c);
  const int w = p.width, h = p.height, r = cfg.ssim_radius;
  auto m = [&](std::size_t i) { return mask[i] ? 1.0 : 0.0; };
  Integral sp(w, h), sc(w, h), spp(w, h), scc(w, h), spc(w, h), cnt(w, h);
  sp.fill(w, h, [&](std::size_t i) { return m(i) * lp.data[i]; });
  sc.fill(w, h, [&](std::size_t i) { return m(i) * lc.data[i]; });
  spp.fill(w, h, [&](std::size_t i) { return m(i) * lp.data[i] * lp.data[i]; });
  scc.fill(w, h, [&](std::size_t i) { return m(i) * lc.data[i] * lc.data[i]; });
  spc.fill(w, h, [&](std::size_t i) { return m(i) * lp.data[i] * lc.data[i]; });
  cnt.fill(w, h, m);

  HeatMap out(w, h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!mask[idx]) {
        out.valid[idx] = 0;
        out.scores[idx] = 0.0;
        continue;
      }
      const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
      const double n = cnt.sum(x0, y0, x1, y1);
      const double mu_p = sp.sum(x0, y0, x1, y1) / n;
      const double mu_c = sc.sum(x0, y0, x1, y1) / n;
      const double var_p = spp.sum(x0, y0, x1, y1) / n - mu_p * mu_p;
      const double var_c = scc.sum(x0, y0, x1, y1) / n - mu_c * mu_c;
      const double cov = spc.sum(x0, y0, x1, y1) / n - mu_p * mu_c;
      const double a = (2.0 * (mu_p * mu_c) + c1) * (2.0 * cov + c2);
      const double b = (mu_p * mu_p + mu_c * mu_c + c1) * (var_p + var_c + c2);
      out.scores[idx] = a / b;
    }
  }
  return out;
}

HeatMap hsvks_raw(const Image& p, const Image& c, const ComparatorConfig& cfg) {
  require_same_size(p, c, "hsvks");
  constexpr std::size_t kMinSamples = 8;
  const auto mask = overlap_mask(p, c);
  const Image hp = as_hsv(p), hc = as_hsv(c);
  const int w = p.width, h = p.height, r = cfg.hist_radius;
  const int stride = cfg.full_density ? 1 : cfg.hist_stride;
  const auto gx = grid_positions(w - 1, stride), gy = grid_positions(h - 1, stride);
  const KsCorrection corr = cfg.hsvks_stephens ? KsCorrection::Stephens : KsCorrection::None;

  std::vector<double> values(gx.size() * gy.size(), 0.0);
  std::vector<std::uint8_t> valid(values.size(), 0);
  parallel_for(gy.size(), [&](std::size_t j) {
    std::array<std::vector<double>, 3> a, b;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const int cx = gx[i], cy = gy[j];
      for (int ch = 0; ch < 3; ++ch) {
        a[static_cast<std::size_t>(ch)].clear();
        b[static_cast<std::size_t>(ch)].clear();
      }
      for (int y = std::max(0, cy - r); y <= std::min(h - 1, cy + r); ++y) {
        for (int x = std::max(0, cx - r); x <= std::min(w - 1, cx + r); ++x) {
          if (!mask[static_cast<std::size_t>(y) * w + x]) continue;
          for (int ch = 0; ch < 3; ++ch) {
            a[static_cast<std::size_t>(ch)].push_back(hp.at(x, y, ch));
            b[static_cast<std::size_t>(ch)].push_back(hc.at(x, y, ch));
          }
        }
      }
      if (a[0].size() < kMinSamples) continue;
      double psum = 0.0;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double d = ks_statistic(a[ch], b[ch]);
        psum += ks_pvalue(d, a[ch].size(), b[ch].size(), corr);
      }
      values[j * gx.size() + i] = psum / 3.0;
      valid[j * gx.size() + i] = 1;
    }
  });
  std::vector<double> xs(gx.begin(), gx.end()), ys(gy.begin(), gy.end());
  HeatMap out = upsample_grid(values, valid, xs, ys, w, h);
  restrict_to(out, mask);
  return out;
}

HeatMap patchmatch_raw(const Image& p, const Image& c, const ComparatorConfig& cfg) {
  require_same_size(p, c, "patchmatch");
  if (p.width < cfg.pm_patch || p.height < cfg.pm_patch) {
    throw ComparatorError("patchmatch: image smaller than one patch");
  }
  const auto mask = overlap_mask(p, c);
  const NnfResult nnf = patchmatch_nnf(p, c, cfg);
  const double rejected = p.channels + 1.0;
  std::vector<double> sum(p.pixel_count(), 0.0);
  std::vector<int> count(p.pixel_count(), 0);
  for (std::size_t j = 0; j < nnf.ys.size(); ++j) {
    for (std::size_t i = 0; i < nnf.xs.size(); ++i) {
      const std::size_t k = j * nnf.xs.size() + i;
      if (!nnf.usable[k] || nnf.costs[k] >= rejected) continue;
      for (int y = nnf.ys[j]; y < nnf.ys[j] + nnf.patch; ++y) {
        for (int x = nnf.xs[i]; x < nnf.xs[i] + nnf.patch; ++x) {
          const std::size_t idx = static_cast<std::size_t>(y) * p.width + x;
          sum[idx] += nnf.costs[k];
          ++count[idx];
        }
      }
    }
  }
  HeatMap out(p.width, p.height);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    out.valid[i] = count[i] > 0 && mask[i];
    out.scores[i] = out.valid[i] ? sum[i] / count[i] : 0.0;
  }
  return out;
}

bool flips_polarity(Method m) { return m != Method::PatchMatch; }

HeatMap compare_raw(Method m, const Image& p, const Image& c, const ComparatorConfig& cfg) {
  cfg.validate();
  switch (m) {
    case Method::Irpsnr: return irpsnr_raw(p, c, cfg);
    case Method::Prnu: return prnu_raw(p, c, cfg);
    case Method::Ssim: return ssim_raw(p, c, cfg);
    case Method::HsvKs: return hsvks_raw(p, c, cfg);
    case Method::PatchMatch: return patchmatch_raw(p, c, cfg);
  }
  throw ParameterError("unknown comparator");
}

HeatMap compare(Method m, const Image& p, const Image& c, const ComparatorConfig& cfg) {
  return normalize_polarity(compare_raw(m, p, c, cfg), flips_polarity(m));
}

}  // namespace ctxf

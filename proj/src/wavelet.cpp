#include "ctxf/wavelet.hpp"

#include <algorithm>
#include <array>
#include <limits>

#include "ctxf/error.hpp"

namespace ctxf {

namespace {

constexpr std::array<double, 8> kLow{0.2303778133088964,  0.7148465705529154,  0.6308807679298587,
                                     -0.0279837694168599, -0.1870348117190931, 0.0308413818355607,
                                     0.0328830116668852,  -0.0105974017850690};

constexpr std::array<double, 8> high_pass() {
  std::array<double, 8> g{};
  for (std::size_t n = 0; n < 8; ++n) g[n] = (n % 2 == 0 ? 1.0 : -1.0) * kLow[7 - n];
  return g;
}
constexpr std::array<double, 8> kHigh = high_pass();

// One analysis step on a strided 1-D signal of even length n.
void analyze(const double* in, std::size_t stride, std::size_t n, double* out_low, double* out_high) {
  const std::size_t half = n / 2;
  for (std::size_t k = 0; k < half; ++k) {
    double lo = 0.0, hi = 0.0;
    for (std::size_t t = 0; t < 8; ++t) {
      const double s = in[((2 * k + t) % n) * stride];
      lo += kLow[t] * s;
      hi += kHigh[t] * s;
    }
    out_low[k] = lo;
    out_high[k] = hi;
  }
}

void synthesize(const double* low, const double* high, std::size_t n, double* out) {
  std::fill(out, out + n, 0.0);
  const std::size_t half = n / 2;
  for (std::size_t k = 0; k < half; ++k) {
    for (std::size_t t = 0; t < 8; ++t) out[(2 * k + t) % n] += kLow[t] * low[k] + kHigh[t] * high[k];
  }
}

void check_dims(const Plane& x, int levels) {
  const int m = 1 << levels;
  if (levels < 1 || x.width % m != 0 || x.height % m != 0 || x.width < m || x.height < m) {
    throw ParameterError("dwt2: plane size must be a positive multiple of 2^levels");
  }
}

// Transforms the top-left w x h block of `p` one level, in place.
void forward_level(Plane& p, int w, int h) {
  std::vector<double> buf(static_cast<std::size_t>(std::max(w, h)));
  std::vector<double> lo(buf.size() / 2), hi(buf.size() / 2);
  for (int y = 0; y < h; ++y) {
    double* row = &p.v[static_cast<std::size_t>(y) * p.width];
    analyze(row, 1, static_cast<std::size_t>(w), lo.data(), hi.data());
    std::copy(lo.begin(), lo.begin() + w / 2, row);
    std::copy(hi.begin(), hi.begin() + w / 2, row + w / 2);
  }
  for (int x = 0; x < w; ++x) {
    double* col = &p.v[static_cast<std::size_t>(x)];
    analyze(col, static_cast<std::size_t>(p.width), static_cast<std::size_t>(h), lo.data(), hi.data());
    for (int y = 0; y < h / 2; ++y) {
      col[static_cast<std::size_t>(y) * p.width] = lo[static_cast<std::size_t>(y)];
      col[static_cast<std::size_t>(y + h / 2) * p.width] = hi[static_cast<std::size_t>(y)];
    }
  }
}

void inverse_level(Plane& p, int w, int h) {
  std::vector<double> lo(static_cast<std::size_t>(std::max(w, h) / 2)), hi(lo.size());
  std::vector<double> out(static_cast<std::size_t>(std::max(w, h)));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h / 2; ++y) {
      lo[static_cast<std::size_t>(y)] = p.at(x, y);
      hi[static_cast<std::size_t>(y)] = p.at(x, y + h / 2);
    }
    synthesize(lo.data(), hi.data(), static_cast<std::size_t>(h), out.data());
    for (int y = 0; y < h; ++y) p.at(x, y) = out[static_cast<std::size_t>(y)];
  }
  for (int y = 0; y < h; ++y) {
    double* row = &p.v[static_cast<std::size_t>(y) * p.width];
    std::copy(row, row + w / 2, lo.begin());
    std::copy(row + w / 2, row + w, hi.begin());
    synthesize(lo.data(), hi.data(), static_cast<std::size_t>(w), out.data());
    std::copy(out.begin(), out.begin() + w, row);
  }
}

// Wiener shrinkage of the w x h subband whose top-left corner is (x0, y0).
void shrink_subband(Plane& p, int x0, int y0, int w, int h, double sigma0) {
  const double s2 = sigma0 * sigma0;
  // Integral image of squared coefficients.
  std::vector<double> ii(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  auto I = [&](int x, int y) -> double& { return ii[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      const double c = p.at(x0 + x, y0 + y);
      row += c * c;
      I(x + 1, y + 1) = I(x + 1, y) + row;
    }
  }
  std::vector<double> var(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (int r = 1; r <= 4; ++r) {
        const int xa = std::max(0, x - r), xb = std::min(w, x + r + 1);
        const int ya = std::max(0, y - r), yb = std::min(h, y + r + 1);
        const double sum = I(xb, yb) - I(xa, yb) - I(xb, ya) + I(xa, ya);
        const double mean = sum / static_cast<double>((xb - xa) * (yb - ya));
        best = std::min(best, std::max(0.0, mean - s2));
      }
      var[static_cast<std::size_t>(y) * w + x] = best;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = var[static_cast<std::size_t>(y) * w + x];
      p.at(x0 + x, y0 + y) *= v / (v + s2);
    }
  }
}

}  // namespace

Plane dwt2(const Plane& x, int levels) {
  check_dims(x, levels);
  Plane p = x;
  int w = x.width, h = x.height;
  for (int l = 0; l < levels; ++l, w /= 2, h /= 2) forward_level(p, w, h);
  return p;
}

Plane idwt2(const Plane& coeffs, int levels) {
  check_dims(coeffs, levels);
  Plane p = coeffs;
  for (int l = levels - 1; l >= 0; --l) inverse_level(p, coeffs.width >> l, coeffs.height >> l);
  return p;
}

Plane wavelet_denoise(const Plane& x, int levels, double sigma0) {
  if (!(sigma0 > 0.0)) throw ParameterError("wavelet_denoise: sigma0 must be positive");
  Plane c = dwt2(x, levels);
  for (int l = 0; l < levels; ++l) {
    const int w = x.width >> (l + 1), h = x.height >> (l + 1);
    shrink_subband(c, w, 0, w, h, sigma0);  // horizontal detail
    shrink_subband(c, 0, h, w, h, sigma0);  // vertical detail
    shrink_subband(c, w, h, w, h, sigma0);  // diagonal detail
  }
  return idwt2(c, levels);
}

Plane noise_residual(const Plane& x, int levels, double sigma0) {
  const int m = 1 << levels;
  const int pw = (x.width + m - 1) / m * m, ph = (x.height + m - 1) / m * m;
  Plane padded(pw, ph);
  for (int y = 0; y < ph; ++y) {
    for (int xx = 0; xx < pw; ++xx) padded.at(xx, y) = x.at(std::min(xx, x.width - 1), std::min(y, x.height - 1));
  }
  const Plane den = wavelet_denoise(padded, levels, sigma0);
  Plane r(x.width, x.height);
  for (int y = 0; y < x.height; ++y) {
    for (int xx = 0; xx < x.width; ++xx) r.at(xx, y) = x.at(xx, y) - den.at(xx, y);
  }
  return r;
}

}  // namespace ctxf

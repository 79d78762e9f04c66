#include "ctxf/imaging.hpp"

#include <algorithm>
#include <cmath>

#include "ctxf/error.hpp"

namespace ctxf {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Running count of invalid pixels along one line, used to decide whether a
// kernel support window touches an invalid sample.
std::vector<int> invalid_prefix(const std::vector<std::uint8_t>& valid, std::size_t start,
                                std::size_t stride, int n) {
  std::vector<int> prefix(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i) {
    prefix[i + 1] = prefix[i] + (valid[start + static_cast<std::size_t>(i) * stride] == 0 ? 1 : 0);
  }
  return prefix;
}

}  // namespace

Image to_luma(const Image& img) {
  if (img.colorspace != ColorSpace::RGB) throw TypeError("to_luma: expected an RGB image");
  Image out(img.width, img.height, ColorSpace::Gray);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double* p = &img.data[i * 3];
    out.data[i] = clamp01(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]);
  }
  out.valid = img.valid;
  return out;
}

Image luminance(const Image& img) {
  if (img.colorspace == ColorSpace::Gray) return img;
  return to_luma(img);
}

Image rgb_to_hsv(const Image& img) {
  if (img.colorspace != ColorSpace::RGB) throw TypeError("rgb_to_hsv: expected an RGB image");
  Image out(img.width, img.height, ColorSpace::HSV);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double r = img.data[i * 3];
    const double g = img.data[i * 3 + 1];
    const double b = img.data[i * 3 + 2];
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    double h = 0.0;
    if (delta > 0.0) {
      if (mx == r) {
        h = (g - b) / delta;
        if (h < 0.0) h += 6.0;
      } else if (mx == g) {
        h = (b - r) / delta + 2.0;
      } else {
        h = (r - g) / delta + 4.0;
      }
      h /= 6.0;
      if (h >= 1.0) h -= 1.0;
    }
    out.data[i * 3] = h;
    out.data[i * 3 + 1] = mx > 0.0 ? delta / mx : 0.0;
    out.data[i * 3 + 2] = mx;
  }
  out.valid = img.valid;
  return out;
}

Image hsv_to_rgb(const Image& img) {
  if (img.colorspace != ColorSpace::HSV) throw TypeError("hsv_to_rgb: expected an HSV image");
  Image out(img.width, img.height, ColorSpace::RGB);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    double h = img.data[i * 3];
    const double s = img.data[i * 3 + 1];
    const double v = img.data[i * 3 + 2];
    h -= std::floor(h);
    const double h6 = h * 6.0;
    const int sector = static_cast<int>(std::floor(h6)) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    double r = v, g = v, b = v;
    switch (sector) {
      case 0: r = v; g = t; b = p; break;
      case 1: r = q; g = v; b = p; break;
      case 2: r = p; g = v; b = t; break;
      case 3: r = p; g = q; b = v; break;
      case 4: r = t; g = p; b = v; break;
      default: r = v; g = p; b = q; break;
    }
    out.data[i * 3] = clamp01(r);
    out.data[i * 3 + 1] = clamp01(g);
    out.data[i * 3 + 2] = clamp01(b);
  }
  out.valid = img.valid;
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_blur: sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

Image gaussian_blur(const Image& img, double sigma) {
  const std::vector<double> kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int w = img.width;
  const int h = img.height;
  const int ch = img.channels;

  Image tmp = img;
  Image out = img;

  // Horizontal pass.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int sx = std::clamp(x + k, 0, w - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * img.at(sx, y, c);
        }
        tmp.at(x, y, c) = acc;
      }
    }
  }
  // Vertical pass.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int sy = std::clamp(y + k, 0, h - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(x, sy, c);
        }
        out.at(x, y, c) = std::clamp(acc, 0.0, 1.0);
      }
    }
  }

  if (img.has_mask()) {
    // A pixel stays valid only if its whole (clamped) square support is valid.
    std::vector<std::uint8_t> row_ok(img.pixel_count(), 1);
    for (int y = 0; y < h; ++y) {
      const auto prefix = invalid_prefix(img.valid, static_cast<std::size_t>(y) * w, 1, w);
      for (int x = 0; x < w; ++x) {
        const int lo = std::max(0, x - radius);
        const int hi = std::min(w - 1, x + radius);
        row_ok[static_cast<std::size_t>(y) * w + x] = prefix[hi + 1] - prefix[lo] == 0;
      }
    }
    for (int x = 0; x < w; ++x) {
      const auto prefix = invalid_prefix(row_ok, static_cast<std::size_t>(x), w, h);
      for (int y = 0; y < h; ++y) {
        const int lo = std::max(0, y - radius);
        const int hi = std::min(h - 1, y + radius);
        out.valid[static_cast<std::size_t>(y) * w + x] = prefix[hi + 1] - prefix[lo] == 0;
      }
    }
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
      if (!out.valid[i]) {
        for (int c = 0; c < ch; ++c) out.data[i * ch + c] = 0.0;
      }
    }
  }
  return out;
}

bool sample_bilinear(const Image& img, double x, double y, int c, double& out) {
  constexpr double kSlack = 1e-9;
  if (!(x >= -kSlack && x <= img.width - 1 + kSlack && y >= -kSlack && y <= img.height - 1 + kSlack)) {
    return false;
  }
  const double xc = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const double yc = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(xc));
  const int y0 = static_cast<int>(std::floor(yc));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = xc - x0;
  const double fy = yc - y0;
  if (img.has_mask()) {
    if (!img.is_valid(x0, y0)) return false;
    if (fx > 0.0 && !img.is_valid(x1, y0)) return false;
    if (fy > 0.0 && !img.is_valid(x0, y1)) return false;
    if (fx > 0.0 && fy > 0.0 && !img.is_valid(x1, y1)) return false;
  }
  const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
  const double bottom = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
  out = (1.0 - fy) * top + fy * bottom;
  return true;
}

Image warp_affine(const Image& img, const AffineTransform& transform, int out_width,
                  int out_height) {
  const auto inv = transform.inverse();
  if (!inv) throw TransformError("warp_affine: transform is singular");
  Image out(out_width, out_height, img.colorspace);
  out.valid.assign(out.pixel_count(), 1);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const Point2 src = inv->apply({static_cast<double>(x), static_cast<double>(y)});
      bool ok = true;
      for (int c = 0; c < img.channels && ok; ++c) {
        double v = 0.0;
        ok = sample_bilinear(img, src.x, src.y, c, v);
        out.at(x, y, c) = ok ? std::clamp(v, 0.0, 1.0) : 0.0;
      }
      if (!ok) {
        for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = 0.0;
        out.valid[static_cast<std::size_t>(y) * out_width + x] = 0;
      }
    }
  }
  return out;
}

void clamp_unit(Image& img) {
  for (double& v : img.data) v = clamp01(v);
}

}  // namespace ctxf

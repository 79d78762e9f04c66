#include "ctxf/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>

#include "ctxf/error.hpp"
#include "ctxf/imaging.hpp"

namespace ctxf {

namespace {

constexpr double kPi = std::numbers::pi;

class IntegralImage {
 public:
  explicit IntegralImage(const Image& gray)
      : w_(gray.width), h_(gray.height), sums_(static_cast<std::size_t>(w_ + 1) * (h_ + 1), 0.0) {
    for (int y = 0; y < h_; ++y) {
      double row = 0.0;
      for (int x = 0; x < w_; ++x) {
        row += gray.at(x, y);
        sums_[idx(y + 1, x + 1)] = sums_[idx(y, x + 1)] + row;
      }
    }
  }

  int width() const { return w_; }
  int height() const { return h_; }

  // Sum over rows [row, row+rows) and cols [col, col+cols), clipped to the
  // raster. `area` receives the clipped pixel count.
  double box(int row, int col, int rows, int cols, int* area = nullptr) const {
    const int r0 = std::clamp(row, 0, h_);
    const int r1 = std::clamp(row + rows, 0, h_);
    const int c0 = std::clamp(col, 0, w_);
    const int c1 = std::clamp(col + cols, 0, w_);
    if (area) *area = std::max(0, r1 - r0) * std::max(0, c1 - c0);
    if (r1 <= r0 || c1 <= c0) return 0.0;
    return sums_[idx(r1, c1)] - sums_[idx(r0, c1)] - sums_[idx(r1, c0)] + sums_[idx(r0, c0)];
  }

  // Difference of two equal-nominal-area boxes, each replaced by its mean so
  // clipping at the border keeps the response offset-free.
  double balanced(int r1, int c1, int r2, int c2, int rows, int cols) const {
    int a1 = 0, a2 = 0;
    const double s1 = box(r1, c1, rows, cols, &a1);
    const double s2 = box(r2, c2, rows, cols, &a2);
    if (a1 == 0 || a2 == 0) return 0.0;
    return (s1 / a1 - s2 / a2) * static_cast<double>(rows * cols);
  }

  double haar_x(int row, int col, int s) const {
    return balanced(row - s / 2, col, row - s / 2, col - s / 2, s, s / 2);
  }
  double haar_y(int row, int col, int s) const {
    return balanced(row, col - s / 2, row - s / 2, col - s / 2, s / 2, s);
  }

 private:
  std::size_t idx(int r, int c) const { return static_cast<std::size_t>(r) * (w_ + 1) + c; }
  int w_, h_;
  std::vector<double> sums_;
};

struct ResponseLayer {
  int width = 0;
  int height = 0;
  int step = 1;
  int filter = 9;
  std::vector<double> responses;
  std::vector<std::uint8_t> laplacian;

  double at(int row, int col) const {
    return responses[static_cast<std::size_t>(row) * width + col];
  }
  // Response at a position expressed on `src`'s (coarser or equal) grid.
  double at(int row, int col, const ResponseLayer& src) const {
    const int scale = width / src.width;
    return responses[static_cast<std::size_t>(scale * row) * width + scale * col];
  }
};

ResponseLayer build_layer(const IntegralImage& ii, int step, int filter) {
  ResponseLayer layer;
  layer.step = step;
  layer.filter = filter;
  layer.width = ii.width() / step;
  layer.height = ii.height() / step;
  layer.responses.assign(static_cast<std::size_t>(layer.width) * layer.height, 0.0);
  layer.laplacian.assign(layer.responses.size(), 0);

  const int border = (filter - 1) / 2;
  const int lobe = filter / 3;
  const double inv_area = 1.0 / (static_cast<double>(filter) * filter);
  for (int ar = 0; ar < layer.height; ++ar) {
    for (int ac = 0; ac < layer.width; ++ac) {
      const int r = ar * step;
      const int c = ac * step;
      double dxx = ii.box(r - lobe + 1, c - border, 2 * lobe - 1, filter) -
                   3.0 * ii.box(r - lobe + 1, c - lobe / 2, 2 * lobe - 1, lobe);
      double dyy = ii.box(r - border, c - lobe + 1, filter, 2 * lobe - 1) -
                   3.0 * ii.box(r - lobe / 2, c - lobe + 1, lobe, 2 * lobe - 1);
      double dxy = ii.box(r - lobe, c + 1, lobe, lobe) + ii.box(r + 1, c - lobe, lobe, lobe) -
                   ii.box(r - lobe, c - lobe, lobe, lobe) - ii.box(r + 1, c + 1, lobe, lobe);
      dxx *= inv_area;
      dyy *= inv_area;
      dxy *= inv_area;
      const std::size_t i = static_cast<std::size_t>(ar) * layer.width + ac;
      layer.responses[i] = dxx * dyy - 0.81 * dxy * dxy;
      layer.laplacian[i] = dxx + dyy >= 0.0 ? 1 : 0;
    }
  }
  return layer;
}

int filter_size(int octave, int interval) { return 3 * ((1 << (octave + 1)) * (interval + 1) + 1); }

bool is_extremum(int r, int c, const ResponseLayer& t, const ResponseLayer& m,
                 const ResponseLayer& b, double threshold) {
  const int border = (t.filter + 1) / (2 * t.step);
  if (r <= border || r >= t.height - border || c <= border || c >= t.width - border) return false;
  const double candidate = m.at(r, c, t);
  if (candidate < threshold) return false;
  for (int rr = -1; rr <= 1; ++rr) {
    for (int cc = -1; cc <= 1; ++cc) {
      if (t.at(r + rr, c + cc) >= candidate) return false;
      if ((rr != 0 || cc != 0) && m.at(r + rr, c + cc, t) >= candidate) return false;
      if (b.at(r + rr, c + cc, t) >= candidate) return false;
    }
  }
  return true;
}

// Quadratic fit of the 3x3x3 neighborhood; false when the offset leaves the
// sample cell or the fit is singular.
bool interpolate(int r, int c, const ResponseLayer& t, const ResponseLayer& m,
                 const ResponseLayer& b, Keypoint& kp) {
  const double v = m.at(r, c, t);
  const double dx = (m.at(r, c + 1, t) - m.at(r, c - 1, t)) / 2.0;
  const double dy = (m.at(r + 1, c, t) - m.at(r - 1, c, t)) / 2.0;
  const double ds = (t.at(r, c) - b.at(r, c, t)) / 2.0;
  const double dxx = m.at(r, c + 1, t) + m.at(r, c - 1, t) - 2.0 * v;
  const double dyy = m.at(r + 1, c, t) + m.at(r - 1, c, t) - 2.0 * v;
  const double dss = t.at(r, c) + b.at(r, c, t) - 2.0 * v;
  const double dxy = (m.at(r + 1, c + 1, t) - m.at(r + 1, c - 1, t) - m.at(r - 1, c + 1, t) +
                      m.at(r - 1, c - 1, t)) / 4.0;
  const double dxs = (t.at(r, c + 1) - t.at(r, c - 1) - b.at(r, c + 1, t) + b.at(r, c - 1, t)) / 4.0;
  const double dys = (t.at(r + 1, c) - t.at(r - 1, c) - b.at(r + 1, c, t) + b.at(r - 1, c, t)) / 4.0;

  // Solve H * o = -D with Cramer's rule.
  const double h[3][3] = {{dxx, dxy, dxs}, {dxy, dyy, dys}, {dxs, dys, dss}};
  const double det = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1]) -
                     h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0]) +
                     h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
  if (std::abs(det) < 1e-30) return false;
  const double rhs[3] = {-dx, -dy, -ds};
  double o[3];
  for (int k = 0; k < 3; ++k) {
    double mtx[3][3];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) mtx[i][j] = j == k ? rhs[i] : h[i][j];
    }
    o[k] = (mtx[0][0] * (mtx[1][1] * mtx[2][2] - mtx[1][2] * mtx[2][1]) -
            mtx[0][1] * (mtx[1][0] * mtx[2][2] - mtx[1][2] * mtx[2][0]) +
            mtx[0][2] * (mtx[1][0] * mtx[2][1] - mtx[1][1] * mtx[2][0])) /
           det;
  }
  if (!(std::abs(o[0]) < 0.5 && std::abs(o[1]) < 0.5 && std::abs(o[2]) < 0.5)) return false;
  const int filter_step = m.filter - b.filter;
  kp.x = static_cast<float>((c + o[0]) * t.step);
  kp.y = static_cast<float>((r + o[1]) * t.step);
  kp.scale = static_cast<float>(0.1333 * (m.filter + o[2] * filter_step));
  kp.response = static_cast<float>(v);
  return true;
}

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

double dominant_orientation(const IntegralImage& ii, const Keypoint& kp) {
  const int s = std::max(1, static_cast<int>(std::lround(kp.scale)));
  const int r = static_cast<int>(std::lround(kp.y));
  const int c = static_cast<int>(std::lround(kp.x));
  struct Sample {
    double rx, ry, angle;
  };
  std::vector<Sample> samples;
  samples.reserve(113);
  for (int i = -6; i <= 6; ++i) {
    for (int j = -6; j <= 6; ++j) {
      if (i * i + j * j >= 36) continue;
      const double g = std::exp(-(i * i + j * j) / (2.0 * 2.5 * 2.5));
      const double rx = g * ii.haar_x(r + j * s, c + i * s, 4 * s);
      const double ry = g * ii.haar_y(r + j * s, c + i * s, 4 * s);
      if (rx == 0.0 && ry == 0.0) continue;
      double a = std::atan2(ry, rx);
      if (a < 0.0) a += 2.0 * kPi;
      samples.push_back({rx, ry, a});
    }
  }
  double best = -1.0;
  double orientation = 0.0;
  constexpr int kWindows = 72;
  constexpr double kWidth = kPi / 3.0;
  for (int k = 0; k < kWindows; ++k) {
    const double lo = 2.0 * kPi * k / kWindows;
    double sx = 0.0, sy = 0.0;
    for (const auto& smp : samples) {
      double d = smp.angle - lo;
      if (d < 0.0) d += 2.0 * kPi;
      if (d < kWidth) {
        sx += smp.rx;
        sy += smp.ry;
      }
    }
    const double mag = sx * sx + sy * sy;
    if (mag > best) {
      best = mag;
      orientation = std::atan2(sy, sx);
    }
  }
  return wrap_angle(orientation);
}

bool describe(const IntegralImage& ii, const Keypoint& kp, DescriptorVector& out) {
  const double scale = kp.scale;
  const int haar = std::max(2, 2 * static_cast<int>(std::lround(scale)));
  const double co = std::cos(kp.orientation);
  const double si = std::sin(kp.orientation);
  std::array<double, kDescriptorDims> acc{};
  constexpr double kSigma = 3.3;
  for (int ui = 0; ui < 20; ++ui) {
    for (int vi = 0; vi < 20; ++vi) {
      const double u = ui - 9.5;
      const double v = vi - 9.5;
      const double px = kp.x + scale * (co * u - si * v);
      const double py = kp.y + scale * (si * u + co * v);
      const int row = static_cast<int>(std::lround(py));
      const int col = static_cast<int>(std::lround(px));
      const double g = std::exp(-(u * u + v * v) / (2.0 * kSigma * kSigma));
      const double rx = ii.haar_x(row, col, haar);
      const double ry = ii.haar_y(row, col, haar);
      const double dx = g * (co * rx + si * ry);
      const double dy = g * (-si * rx + co * ry);
      const std::size_t base = static_cast<std::size_t>(((vi / 5) * 4 + (ui / 5)) * 4);
      acc[base] += dx;
      acc[base + 1] += dy;
      acc[base + 2] += std::abs(dx);
      acc[base + 3] += std::abs(dy);
    }
  }
  double norm = 0.0;
  for (double a : acc) norm += a * a;
  norm = std::sqrt(norm);
  if (norm < 1e-12) return false;
  for (std::size_t i = 0; i < kDescriptorDims; ++i) out[i] = static_cast<float>(acc[i] / norm);
  return true;
}

}  // namespace

std::vector<Descriptor> SurfExtractor::extract(const Image& img, std::uint64_t image_id) const {
  if (img.width < 64 || img.height < 64) {
    throw FeatureError("detect_and_describe: image must be at least 64x64");
  }
  if (opts_.octaves < 3 || opts_.intervals < 3 || opts_.init_sample < 1) {
    throw ParameterError("detect_and_describe: need >= 3 octaves and >= 3 intervals");
  }
  const Image gray = luminance(img);
  const IntegralImage ii(gray);

  // Build each distinct filter size once, at the step of the first octave
  // that uses it.
  std::map<int, ResponseLayer> layers;
  std::vector<std::vector<int>> octave_filters(static_cast<std::size_t>(opts_.octaves));
  for (int o = 0; o < opts_.octaves; ++o) {
    const int step = opts_.init_sample << o;
    if (img.width / step < 3 || img.height / step < 3) break;
    for (int i = 0; i < opts_.intervals; ++i) {
      const int f = filter_size(o, i);
      octave_filters[static_cast<std::size_t>(o)].push_back(f);
      if (!layers.contains(f)) layers.emplace(f, build_layer(ii, step, f));
    }
  }

  std::vector<Keypoint> keypoints;
  for (const auto& filters : octave_filters) {
    for (std::size_t i = 0; i + 2 < filters.size(); ++i) {
      const ResponseLayer& b = layers.at(filters[i]);
      const ResponseLayer& m = layers.at(filters[i + 1]);
      const ResponseLayer& t = layers.at(filters[i + 2]);
      for (int r = 0; r < t.height; ++r) {
        for (int c = 0; c < t.width; ++c) {
          if (!is_extremum(r, c, t, m, b, opts_.threshold)) continue;
          Keypoint kp;
          if (!interpolate(r, c, t, m, b, kp)) continue;
          if (kp.x < 0 || kp.y < 0 || kp.x > img.width - 1 || kp.y > img.height - 1) continue;
          if (!(kp.scale > 0.0f)) continue;
          keypoints.push_back(kp);
        }
      }
    }
  }

  std::sort(keypoints.begin(), keypoints.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  std::vector<Descriptor> out;
  out.reserve(std::min(keypoints.size(), opts_.max_points));
  for (Keypoint& kp : keypoints) {
    if (out.size() >= opts_.max_points) break;
    kp.orientation = opts_.upright ? 0.0f : static_cast<float>(dominant_orientation(ii, kp));
    Descriptor d;
    d.keypoint = kp;
    d.image_id = image_id;
    if (!describe(ii, kp, d.vector)) continue;
    out.push_back(d);
  }
  return out;
}

std::vector<Descriptor> detect_and_describe(const Image& img, std::uint64_t image_id,
                                            const FeatureOptions& opts) {
  return SurfExtractor(opts).extract(img, image_id);
}

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

void write_descriptor(std::ostream& os, const Descriptor& d) {
  put(os, d.image_id);
  put(os, d.keypoint.x);
  put(os, d.keypoint.y);
  put(os, d.keypoint.scale);
  put(os, d.keypoint.orientation);
  put(os, d.keypoint.response);
  os.write(reinterpret_cast<const char*>(d.vector.data()), sizeof(float) * kDescriptorDims);
}

bool read_descriptor(std::istream& is, Descriptor& d) {
  std::array<char, kDescriptorRecordBytes> buf{};
  is.read(buf.data(), buf.size());
  if (is.gcount() == 0) return false;
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) {
    throw FormatError("truncated descriptor record");
  }
  const char* p = buf.data();
  auto take = [&p](auto& v) {
    std::memcpy(&v, p, sizeof v);
    p += sizeof v;
  };
  take(d.image_id);
  take(d.keypoint.x);
  take(d.keypoint.y);
  take(d.keypoint.scale);
  take(d.keypoint.orientation);
  take(d.keypoint.response);
  std::memcpy(d.vector.data(), p, sizeof(float) * kDescriptorDims);
  return true;
}

}  // namespace ctxf

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ctxf {

enum class ColorSpace { Gray, RGB, HSV };

/// Planar-interleaved raster with samples in [0,1].
///
/// Samples are stored row-major with channels interleaved
/// (`data[(y * width + x) * channels + c]`). `valid` is either empty (every
/// pixel valid) or holds one byte per pixel.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  ColorSpace colorspace = ColorSpace::Gray;
  std::vector<double> data;
  std::vector<std::uint8_t> valid;

  Image() = default;
  Image(int w, int h, ColorSpace cs, double fill = 0.0);

  static int channels_for(ColorSpace cs) { return cs == ColorSpace::Gray ? 1 : 3; }

  [[nodiscard]] std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  [[nodiscard]] bool empty() const { return pixel_count() == 0; }
  [[nodiscard]] bool has_mask() const { return !valid.empty(); }
  [[nodiscard]] bool same_size(const Image& o) const {
    return width == o.width && height == o.height;
  }

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  [[nodiscard]] double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  [[nodiscard]] bool is_valid(int x, int y) const {
    return valid.empty() || valid[static_cast<std::size_t>(y) * width + x] != 0;
  }
  [[nodiscard]] bool is_valid(std::size_t i) const { return valid.empty() || valid[i] != 0; }

  /// Materializes the mask (all valid) so it can be edited in place.
  void ensure_mask();

  /// Number of pixels flagged valid.
  [[nodiscard]] std::size_t valid_count() const;

  /// Single channel copy.
  [[nodiscard]] Image channel(int c) const;
};

/// Per-pixel tamper evidence. Higher scores mean "more likely tampered".
struct HeatMap {
  int width = 0;
  int height = 0;
  std::vector<double> scores;
  std::vector<std::uint8_t> valid;

  HeatMap() = default;
  HeatMap(int w, int h);

  [[nodiscard]] std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  double& at(int x, int y) { return scores[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] double at(int x, int y) const {
    return scores[static_cast<std::size_t>(y) * width + x];
  }
  [[nodiscard]] bool is_valid(int x, int y) const {
    return valid[static_cast<std::size_t>(y) * width + x] != 0;
  }
  [[nodiscard]] std::size_t valid_count() const;
};

/// Binary ground-truth mask, 1 = alien region.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  [[nodiscard]] std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] std::uint8_t at(int x, int y) const {
    return bits[static_cast<std::size_t>(y) * width + x];
  }
  [[nodiscard]] std::size_t count() const;
};

}  // namespace ctxf

#include "ctxf/image.hpp"

#include <algorithm>

namespace ctxf {

Image::Image(int w, int h, ColorSpace cs, double fill)
    : width(w),
      height(h),
      channels(channels_for(cs)),
      colorspace(cs),
      data(static_cast<std::size_t>(w) * h * channels_for(cs), fill) {}

void Image::ensure_mask() {
  if (valid.empty()) valid.assign(pixel_count(), 1);
}

std::size_t Image::valid_count() const {
  if (valid.empty()) return pixel_count();
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

Image Image::channel(int c) const {
  Image out(width, height, ColorSpace::Gray);
  for (std::size_t i = 0; i < pixel_count(); ++i) out.data[i] = data[i * channels + c];
  out.valid = valid;
  return out;
}

HeatMap::HeatMap(int w, int h)
    : width(w),
      height(h),
      scores(static_cast<std::size_t>(w) * h, 0.0),
      valid(static_cast<std::size_t>(w) * h, 1) {}

std::size_t HeatMap::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; }));
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(
      std::count_if(bits.begin(), bits.end(), [](std::uint8_t v) { return v != 0; }));
}

}  // namespace ctxf

#pragma once

#include <filesystem>

#include "ctxf/image.hpp"

namespace ctxf {

/// Loads PNG or JPEG. Color files become RGB, single-channel files Gray.
Image read_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG (RGB or Gray; HSV is converted to RGB first).
void write_image(const std::filesystem::path& path, const Image& img);

/// Binary masks as 8-bit PNG (0 / 255). Reading thresholds at 128.
void write_mask(const std::filesystem::path& path, const Mask& mask);
Mask read_mask(const std::filesystem::path& path);

/// Heat-map sidecar: "THM1", u16 width, u16 height (little-endian), then
/// width*height little-endian float32 scores. Invalid pixels are NaN.
void write_heatmap_sidecar(const std::filesystem::path& path, const HeatMap& map);
HeatMap read_heatmap_sidecar(const std::filesystem::path& path);

/// 16-bit grayscale PNG, score*65535 rounded, invalid pixels 0.
void write_heatmap_png(const std::filesystem::path& path, const HeatMap& map);

}  // namespace ctxf

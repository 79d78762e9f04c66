#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ctxf/image.hpp"

namespace ctxf {

inline constexpr std::size_t kDescriptorDims = 64;

/// Images yielding fewer keypoints than this are still indexable but are
/// reported as degenerate.
inline constexpr std::size_t kDegenerateKeypointCount = 8;

struct Keypoint {
  float x = 0.0f;
  float y = 0.0f;
  float scale = 0.0f;
  float orientation = 0.0f;  // radians in [-pi, pi)
  float response = 0.0f;
};

using DescriptorVector = std::array<float, kDescriptorDims>;

struct Descriptor {
  DescriptorVector vector{};
  Keypoint keypoint;
  std::uint64_t image_id = 0;
};

struct FeatureOptions {
  std::size_t max_points = 500;
  int octaves = 4;
  int intervals = 4;
  int init_sample = 1;
  double threshold = 0.0004;
  bool upright = false;
};

/// Pluggable detector/descriptor.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  [[nodiscard]] virtual std::vector<Descriptor> extract(const Image& img,
                                                        std::uint64_t image_id) const = 0;
};

/// Fast-Hessian detector on an integral image with 64-d Haar-sum
/// descriptors (SURF construction).
class SurfExtractor final : public FeatureExtractor {
 public:
  explicit SurfExtractor(FeatureOptions opts = {}) : opts_(opts) {}
  [[nodiscard]] std::vector<Descriptor> extract(const Image& img,
                                                std::uint64_t image_id) const override;
  [[nodiscard]] const FeatureOptions& options() const { return opts_; }

 private:
  FeatureOptions opts_;
};

/// Detects up to opts.max_points keypoints (strongest response first, ties by
/// (y, x)) and describes them. Throws FeatureError for images under 64x64.
std::vector<Descriptor> detect_and_describe(const Image& img, std::uint64_t image_id = 0,
                                            const FeatureOptions& opts = {});

inline float squared_distance(const DescriptorVector& a, const DescriptorVector& b) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < kDescriptorDims; ++i) {
    const float d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

/// Flat little-endian record: u64 image_id, f32 x, y, scale, orientation,
/// response, then 64 f32.
inline constexpr std::size_t kDescriptorRecordBytes = 8 + 5 * 4 + kDescriptorDims * 4;
void write_descriptor(std::ostream& os, const Descriptor& d);
/// Returns false on clean EOF; throws FormatError on a partial record.
bool read_descriptor(std::istream& is, Descriptor& d);

}  // namespace ctxf

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "ctxf/error.hpp"
#include "ctxf/features.hpp"
#include "ctxf/synth.hpp"

using namespace ctxf;

namespace {

Image scene(std::uint64_t seed, int size = 256) {
  SceneOptions opts;
  opts.width = size;
  opts.height = size;
  return render_scene(seed, opts);
}

// Exact quarter turn by pixel permutation: out(x', y') = in(y', n-1-x').
Image quarter_turn(const Image& img) {
  const int n = img.width;
  Image out(n, n, img.colorspace);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(y, n - 1 - x, c);
    }
  }
  return out;
}

double norm(const DescriptorVector& v) {
  double acc = 0.0;
  for (float f : v) acc += static_cast<double>(f) * f;
  return std::sqrt(acc);
}

}  // namespace

TEST(Features, ConstantImageHasNoKeypoints) {
  EXPECT_TRUE(detect_and_describe(Image(128, 128, ColorSpace::Gray, 0.4)).empty());
}

TEST(Features, RejectsTinyImages) {
  EXPECT_THROW(detect_and_describe(Image(63, 200, ColorSpace::Gray, 0.4)), FeatureError);
  EXPECT_NO_THROW(detect_and_describe(Image(64, 64, ColorSpace::Gray, 0.4)));
}

TEST(Features, DescriptorsAreUnitNormAndBounded) {
  const auto descs = detect_and_describe(scene(1), 42);
  ASSERT_GE(descs.size(), kDegenerateKeypointCount);
  EXPECT_LE(descs.size(), 500u);
  for (const Descriptor& d : descs) {
    EXPECT_NEAR(norm(d.vector), 1.0, 1e-6);
    EXPECT_EQ(d.image_id, 42u);
    EXPECT_GT(d.keypoint.scale, 0.0f);
    EXPECT_GE(d.keypoint.x, 0.0f);
    EXPECT_LT(d.keypoint.x, 256.0f);
    EXPECT_GE(d.keypoint.y, 0.0f);
    EXPECT_LT(d.keypoint.y, 256.0f);
    EXPECT_GE(d.keypoint.orientation, -static_cast<float>(M_PI));
    EXPECT_LT(d.keypoint.orientation, static_cast<float>(M_PI));
  }
}

TEST(Features, MaxPointsKeepsStrongestPrefix) {
  const Image img = scene(2);
  const auto all = detect_and_describe(img);
  FeatureOptions opts;
  opts.max_points = 10;
  const auto top = detect_and_describe(img, 0, opts);
  ASSERT_EQ(top.size(), 10u);
  for (std::size_t i = 0; i < top.size(); ++i) {
    EXPECT_EQ(top[i].keypoint.x, all[i].keypoint.x);
    EXPECT_EQ(top[i].keypoint.y, all[i].keypoint.y);
    EXPECT_EQ(top[i].vector, all[i].vector);
  }
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_GE(all[i - 1].keypoint.response, all[i].keypoint.response);
}

TEST(Features, Deterministic) {
  const Image img = scene(3);
  const auto a = detect_and_describe(img);
  const auto b = detect_and_describe(img);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].vector, b[i].vector);
    EXPECT_EQ(a[i].keypoint.x, b[i].keypoint.x);
  }
}

TEST(Features, RgbInputIsConvertedInternally) {
  const Image img = scene(4);
  ASSERT_EQ(img.colorspace, ColorSpace::RGB);
  EXPECT_FALSE(detect_and_describe(img).empty());
}

TEST(Features, QuarterTurnCounterparts) {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    const Image img = scene(seed);
    const auto a = detect_and_describe(img);
    const auto b = detect_and_describe(quarter_turn(img));
    ASSERT_FALSE(a.empty());
    const double n1 = img.width - 1;
    std::size_t matched = 0;
    std::vector<bool> used(b.size(), false);
    for (const Descriptor& d : a) {
      const double ex = n1 - d.keypoint.y, ey = d.keypoint.x;
      int best = -1;
      double best_d2 = 4.0;
      for (std::size_t j = 0; j < b.size(); ++j) {
        if (used[j]) continue;
        const double dx = b[j].keypoint.x - ex, dy = b[j].keypoint.y - ey;
        const double d2 = dx * dx + dy * dy;
        if (d2 <= best_d2 && std::sqrt(squared_distance(d.vector, b[j].vector)) < 0.4) {
          best_d2 = d2;
          best = static_cast<int>(j);
        }
      }
      if (best >= 0) {
        used[static_cast<std::size_t>(best)] = true;
        ++matched;
      }
    }
    EXPECT_GE(static_cast<double>(matched) / a.size(), 0.8) << "seed " << seed;
  }
}

TEST(Features, BrightnessOffsetInvariance) {
  Image img = scene(8);
  for (double& v : img.data) v *= 0.85;
  Image brighter = img;
  for (double& v : brighter.data) v += 0.1;
  const auto a = detect_and_describe(img);
  const auto b = detect_and_describe(brighter);
  ASSERT_FALSE(a.empty());
  std::size_t compared = 0;
  for (const Descriptor& d : a) {
    for (const Descriptor& e : b) {
      if (std::abs(d.keypoint.x - e.keypoint.x) < 1e-3f && std::abs(d.keypoint.y - e.keypoint.y) < 1e-3f &&
          std::abs(d.keypoint.scale - e.keypoint.scale) < 1e-3f) {
        EXPECT_LE(std::sqrt(squared_distance(d.vector, e.vector)), 1e-3);
        ++compared;
        break;
      }
    }
  }
  EXPECT_GE(compared, a.size() * 95 / 100);
}

TEST(Features, UprightOptionZeroesOrientation) {
  FeatureOptions opts;
  opts.upright = true;
  for (const Descriptor& d : detect_and_describe(scene(9), 0, opts)) EXPECT_EQ(d.keypoint.orientation, 0.0f);
}

TEST(DescriptorRecord, RoundTripAndTruncation) {
  Descriptor d;
  for (std::size_t i = 0; i < kDescriptorDims; ++i) d.vector[i] = static_cast<float>(i) / 64.0f;
  d.keypoint = {12.5f, 7.25f, 2.0f, -1.0f, 0.01f};
  d.image_id = 0x0102030405060708ull;
  std::stringstream ss;
  write_descriptor(ss, d);
  EXPECT_EQ(ss.str().size(), kDescriptorRecordBytes);
  EXPECT_EQ(static_cast<unsigned char>(ss.str()[0]), 0x08);  // little-endian id

  Descriptor back;
  ASSERT_TRUE(read_descriptor(ss, back));
  EXPECT_EQ(back.vector, d.vector);
  EXPECT_EQ(back.image_id, d.image_id);
  EXPECT_EQ(back.keypoint.y, d.keypoint.y);
  EXPECT_FALSE(read_descriptor(ss, back));

  std::stringstream partial(ss.str().substr(0, 100));
  EXPECT_THROW(read_descriptor(partial, back), FormatError);
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxf/features.hpp"

namespace ctxf {

struct ForestOptions {
  int trees = 8;
  int leaf_size = 16;
  /// Split dimension drawn uniformly from this many highest-variance dims.
  int candidate_dims = 5;
  /// Node variance is estimated on at most this many evenly spaced members.
  int variance_sample = 128;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kDefaultChecks = 256;

struct ImageInfo {
  std::uint64_t image_id = 0;
  std::string path;
  std::uint64_t descriptor_count = 0;
};

struct Neighbor {
  std::uint32_t record = 0;
  float distance = 0.0f;  // L2
};

struct ImageVote {
  std::uint64_t image_id = 0;
  std::uint32_t votes = 0;
  double distance_sum = 0.0;
};

struct QueryResult {
  std::vector<ImageVote> ranked;  // descending by votes
  std::size_t requested = 0;
};

/// Randomized KD-tree forest over 64-d descriptors. Immutable after build;
/// concurrent queries are safe.
class ForestIndex {
 public:
  static constexpr std::uint16_t kFormatVersion = 1;

  /// Throws IndexError on an empty descriptor set. `images` may list paths
  /// for the ids present in `descriptors`; missing ids get an empty path.
  static ForestIndex build(std::vector<Descriptor> descriptors, const ForestOptions& opts = {},
                           const std::vector<ImageInfo>& images = {});

  /// k nearest records, ascending by distance, found by best-bin-first
  /// search sharing one priority queue across all trees. The search stops
  /// after `checks` distinct record evaluations.
  [[nodiscard]] std::vector<Neighbor> knn(std::span<const float> query, std::size_t k,
                                          std::size_t checks = kDefaultChecks) const;

  /// Like knn but keeps at most one record per image.
  [[nodiscard]] std::vector<Neighbor> knn_distinct_images(std::span<const float> query,
                                                          std::size_t k,
                                                          std::size_t checks = kDefaultChecks) const;

  /// Ratio-test voting (nearest / second-nearest image < 0.8) aggregated
  /// per gallery image; top `n` images by votes, then summed distance, then id.
  [[nodiscard]] QueryResult query_images(std::span<const Descriptor> probe, std::size_t n = 100,
                                         std::size_t checks = kDefaultChecks) const;

  void save(const std::filesystem::path& path) const;
  /// Throws FormatError on bad magic, version mismatch or truncation.
  static ForestIndex load(const std::filesystem::path& path);

  [[nodiscard]] std::size_t record_count() const { return image_ids_.size(); }
  [[nodiscard]] std::size_t tree_count() const { return trees_.size(); }
  [[nodiscard]] const ForestOptions& options() const { return opts_; }
  [[nodiscard]] std::span<const float> vector(std::uint32_t record) const {
    return {vectors_.data() + static_cast<std::size_t>(record) * kDescriptorDims, kDescriptorDims};
  }
  [[nodiscard]] std::uint64_t image_of(std::uint32_t record) const { return image_ids_[record]; }
  [[nodiscard]] Descriptor descriptor(std::uint32_t record) const;

  [[nodiscard]] const std::vector<ImageInfo>& images() const { return images_; }
  [[nodiscard]] const ImageInfo* image_info(std::uint64_t image_id) const;
  /// Stored descriptors of one gallery image, in insertion order.
  [[nodiscard]] std::vector<Descriptor> image_descriptors(std::uint64_t image_id) const;

  /// Records reachable by exhaustive traversal of tree `t` (with multiplicity).
  [[nodiscard]] std::size_t reachable_records(std::size_t t) const;

  /// Structural equality of trees and records (used to check determinism).
  [[nodiscard]] bool same_structure(const ForestIndex& other) const;

  struct Node {
    std::int32_t dim = -1;  // -1 marks a leaf
    float split = 0.0f;
    std::uint32_t a = 0;  // inner: left child; leaf: begin offset into order
    std::uint32_t b = 0;  // inner: right child; leaf: end offset
  };
  struct Tree {
    std::vector<Node> nodes;  // nodes[0] is the root
    std::vector<std::uint32_t> order;
  };

 private:
  template <typename ResultSet>
  void search(std::span<const float> query, std::size_t checks, ResultSet& results) const;
  void rebuild_lookup();

  ForestOptions opts_;
  std::vector<float> vectors_;
  std::vector<Keypoint> keypoints_;
  std::vector<std::uint64_t> image_ids_;
  std::vector<ImageInfo> images_;
  std::unordered_map<std::uint64_t, std::size_t> image_slot_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> image_records_;
  std::vector<Tree> trees_;
};

}  // namespace ctxf

#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <vector>

#include "ctxf/forest_index.hpp"
#include "ctxf/image.hpp"
#include "ctxf/rng.hpp"

namespace ctxf {

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  /// (0,0), 256 rank-quantile thresholds, (1,1); fpr non-decreasing.
  std::vector<RocPoint> points;
  /// Exact area (every distinct score is a threshold; ties count half).
  double auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

inline constexpr int kRocThresholds = 256;

/// Pools (score, label) pixels across probes. Only valid heat-map pixels
/// are scored; label 1 means the mask marks the pixel as alien.
class RocAccumulator {
 public:
  /// Throws EvaluationError when the dimensions differ.
  void add(const HeatMap& map, const Mask& mask);
  void merge(const RocAccumulator& other);
  /// Throws EvaluationError when either class is empty.
  [[nodiscard]] RocCurve finish() const;

  [[nodiscard]] std::size_t positives() const { return pos_.size(); }
  [[nodiscard]] std::size_t negatives() const { return neg_.size(); }

 private:
  std::vector<double> pos_;
  std::vector<double> neg_;
};

RocCurve roc(std::span<const HeatMap> maps, std::span<const Mask> masks);

/// Header `threshold,fpr,tpr`, one row per point, then `auc,<value>`.
void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);

struct RecallResult {
  double recall = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // probes with an empty truth set
};

/// Fraction of probes with a true relative among the first `rank` results.
/// results[i] belongs to the probe whose truth set is truth[i].
RecallResult recall_at_rank(std::span<const QueryResult> results,
                            std::span<const std::set<std::uint64_t>> truth, std::size_t rank);

/// Per-channel multiplicative HSV jitter: factor uniform in [1-u, 1+u] with
/// u uniform in [0, delta). Hue wraps, S and V clamp. RGB or Gray input,
/// output has the input's colorspace.
Image perturb_hsv(const Image& img, double delta, std::uint64_t seed);

/// Poisson(p * peak) / peak per sample with peak drawn uniform in
/// [peak_lo, peak_hi], clamped to [0,1].
Image perturb_poisson(const Image& img, double peak_lo, double peak_hi, std::uint64_t seed);
/// Same with a fixed peak.
Image perturb_poisson_peak(const Image& img, double peak, std::uint64_t seed);

/// Rotation about the image center by an angle uniform in
/// [-max_deg, max_deg]; uncovered pixels become invalid.
Image perturb_rotate(const Image& img, double max_deg, std::uint64_t seed);
Image rotate_about_center(const Image& img, double degrees);
/// The angle perturb_rotate draws for this seed.
double rotation_angle_for(double max_deg, std::uint64_t seed);

/// Poisson variate; exact inversion below mean 10, transformed rejection above.
std::uint64_t poisson_sample(Rng& rng, double mean);

}  // namespace ctxf

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ctxf/features.hpp"
#include "ctxf/geometry.hpp"
#include "ctxf/image.hpp"

namespace ctxf {

inline constexpr double kMatchRatio = 0.8;
inline constexpr std::size_t kMinAffineMatches = 3;

struct Match {
  std::uint32_t a = 0;  // index into the first list
  std::uint32_t b = 0;  // index into the second list
  float distance = 0.0f;
};

/// Mutual nearest neighbours (brute-force L2) whose a->b nearest distance is
/// below `ratio` times the second-nearest. Never throws; may return fewer
/// than three matches.
std::vector<Match> find_matches(std::span<const Descriptor> a, std::span<const Descriptor> b,
                                double ratio = kMatchRatio);

/// find_matches, but throws RegistrationInfeasible when either list is empty
/// or fewer than three matches survive.
std::vector<Match> match_descriptors(std::span<const Descriptor> a, std::span<const Descriptor> b,
                                     double ratio = kMatchRatio);

struct MsacOptions {
  double tau = 3.0;  // inlier threshold in destination pixels
  int max_iters = 2000;
  double confidence = 0.99;
  std::uint64_t seed = 0;
  /// When set, tau is replaced by 0.005 * frame_diagonal.
  bool scale_free_tau = false;
  double frame_diagonal = 0.0;

  [[nodiscard]] double effective_tau() const {
    return scale_free_tau ? 0.005 * frame_diagonal : tau;
  }
};

struct AffineEstimate {
  AffineTransform transform;
  std::vector<std::uint32_t> inliers;  // indices into the correspondence list
  double cost = 0.0;                   // MSAC cost of the final model
  int iterations = 0;
};

/// Robust affine fit mapping src[i] onto dst[i]. Scores hypotheses by
/// sum(min(e^2, tau^2)) with e the forward transfer error |F src - dst|,
/// adapts the iteration count to the inlier ratio, and refits the winner by
/// least squares on its inliers. Throws RegistrationInfeasible for fewer than
/// three pairs, DegenerateGeometry when every sample drawn was collinear.
AffineEstimate estimate_affine_msac(std::span<const Point2> src, std::span<const Point2> dst,
                                    const MsacOptions& opts = {});

/// Same, taking matches between two keypoint lists (`a` = source).
AffineEstimate estimate_affine_msac(std::span<const Match> matches, std::span<const Point2> pts_a,
                                    std::span<const Point2> pts_b, const MsacOptions& opts = {});

/// Exact affine through three point pairs; false when src is collinear.
bool affine_from_three(const std::array<Point2, 3>& src, const std::array<Point2, 3>& dst,
                       AffineTransform& out);

/// Least-squares affine over the given pairs; false when degenerate.
bool affine_least_squares(std::span<const Point2> src, std::span<const Point2> dst,
                          AffineTransform& out);

/// Reciprocal Frobenius condition 1 / (|F|_F |F^-1|_F) over all nine
/// entries. Singular matrices give 0.
double rfn(const std::array<double, 9>& m);
double rfn(const AffineTransform& f);

struct RankedCandidate {
  std::uint64_t image_id = 0;
  AffineTransform transform;
  double rfn = 0.0;
  std::size_t inlier_count = 0;
};

/// Index of the preferred candidate: highest RFN; RFNs within 1e-12 are
/// tied and broken by more inliers, then lower image id. Candidates with
/// RFN <= 0 are unusable. Returns -1 when none is usable.
int select_candidate(std::span<const RankedCandidate> candidates);

struct CandidateImage {
  RankedCandidate candidate;
  const Image* image = nullptr;
};

struct Selection {
  Image context;  // candidate warped into the probe frame
  RankedCandidate chosen;
};

/// Warps the preferred candidate into the probe frame at probe dimensions.
/// Throws NoContextError when no candidate has RFN > 0.
Selection select_and_warp(const Image& probe, std::span<const CandidateImage> candidates);

/// Match, estimate and score one candidate against the probe (candidate
/// keypoints are the source, probe keypoints the destination).
RankedCandidate register_candidate(std::span<const Descriptor> probe,
                                   std::span<const Descriptor> candidate, std::uint64_t image_id,
                                   const MsacOptions& opts = {});

}  // namespace ctxf

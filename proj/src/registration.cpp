#include "ctxf/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ctxf/error.hpp"
#include "ctxf/imaging.hpp"
#include "ctxf/rng.hpp"

namespace ctxf {

namespace {

constexpr double kTieRfn = 1e-12;

double transfer_error_sq(const AffineTransform& f, Point2 s, Point2 d) {
  const Point2 p = f.apply(s);
  const double dx = p.x - d.x, dy = p.y - d.y;
  return dx * dx + dy * dy;
}

bool collinear(const Point2& p0, const Point2& p1, const Point2& p2) {
  const double ux = p1.x - p0.x, uy = p1.y - p0.y;
  const double vx = p2.x - p0.x, vy = p2.y - p0.y;
  const double cross = ux * vy - uy * vx;
  return std::abs(cross) <= 1e-6 * (ux * ux + uy * uy + vx * vx + vy * vy) || cross == 0.0;
}

// Solves the symmetric 3x3 system m x = r by Cramer's rule.
bool solve3(const std::array<double, 9>& m, const std::array<double, 3>& r, std::array<double, 3>& x) {
  auto det3 = [](const std::array<double, 9>& a) {
    return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
           a[2] * (a[3] * a[7] - a[4] * a[6]);
  };
  const double det = det3(m);
  double scale = 0.0;
  for (double v : m) scale = std::max(scale, std::abs(v));
  if (!(std::abs(det) > 1e-12 * scale * scale * scale)) return false;
  for (int c = 0; c < 3; ++c) {
    std::array<double, 9> mc = m;
    for (int row = 0; row < 3; ++row) mc[static_cast<std::size_t>(row * 3 + c)] = r[static_cast<std::size_t>(row)];
    x[static_cast<std::size_t>(c)] = det3(mc) / det;
  }
  return true;
}

struct Scored {
  double cost = std::numeric_limits<double>::infinity();
  std::size_t inliers = 0;
};

Scored score(const AffineTransform& f, std::span<const Point2> src, std::span<const Point2> dst,
             double tau2) {
  Scored s{0.0, 0};
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double e2 = transfer_error_sq(f, src[i], dst[i]);
    if (e2 < tau2) {
      s.cost += e2;
      ++s.inliers;
    } else {
      s.cost += tau2;
    }
  }
  return s;
}

std::vector<std::uint32_t> inlier_indices(const AffineTransform& f, std::span<const Point2> src,
                                          std::span<const Point2> dst, double tau2) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < src.size(); ++i) {
    if (transfer_error_sq(f, src[i], dst[i]) < tau2) out.push_back(i);
  }
  return out;
}

}  // namespace

std::vector<Match> find_matches(std::span<const Descriptor> a, std::span<const Descriptor> b,
                                double ratio) {
  std::vector<Match> out;
  if (a.empty() || b.empty()) return out;
  constexpr float kInf = std::numeric_limits<float>::infinity();
  std::vector<std::uint32_t> best_a_for_b(b.size(), 0);
  std::vector<float> best_d_for_b(b.size(), kInf);
  std::vector<std::uint32_t> nn(a.size(), 0);
  std::vector<float> d1(a.size(), kInf), d2(a.size(), kInf);
  for (std::uint32_t i = 0; i < a.size(); ++i) {
    for (std::uint32_t j = 0; j < b.size(); ++j) {
      const float d = squared_distance(a[i].vector, b[j].vector);
      if (d < d1[i]) {
        d2[i] = d1[i];
        d1[i] = d;
        nn[i] = j;
      } else if (d < d2[i]) {
        d2[i] = d;
      }
      if (d < best_d_for_b[j]) {
        best_d_for_b[j] = d;
        best_a_for_b[j] = i;
      }
    }
  }
  const double r2 = ratio * ratio;
  for (std::uint32_t i = 0; i < a.size(); ++i) {
    if (best_a_for_b[nn[i]] != i) continue;
    if (!(static_cast<double>(d1[i]) < r2 * static_cast<double>(d2[i]))) continue;
    out.push_back({i, nn[i], std::sqrt(d1[i])});
  }
  return out;
}

std::vector<Match> match_descriptors(std::span<const Descriptor> a, std::span<const Descriptor> b,
                                     double ratio) {
  if (a.empty() || b.empty()) throw RegistrationInfeasible("match_descriptors: empty descriptor list");
  auto matches = find_matches(a, b, ratio);
  if (matches.size() < kMinAffineMatches) {
    throw RegistrationInfeasible("only " + std::to_string(matches.size()) + " descriptor matches");
  }
  return matches;
}

bool affine_from_three(const std::array<Point2, 3>& src, const std::array<Point2, 3>& dst,
                       AffineTransform& out) {
  if (collinear(src[0], src[1], src[2])) return false;
  // Solve in coordinates relative to src[0] for conditioning.
  const double ux = src[1].x - src[0].x, uy = src[1].y - src[0].y;
  const double vx = src[2].x - src[0].x, vy = src[2].y - src[0].y;
  const double det = ux * vy - uy * vx;
  const double px = dst[1].x - dst[0].x, py = dst[1].y - dst[0].y;
  const double qx = dst[2].x - dst[0].x, qy = dst[2].y - dst[0].y;
  // [a b; c d] [u v] = [p q]
  const double a = (px * vy - qx * uy) / det;
  const double b = (qx * ux - px * vx) / det;
  const double c = (py * vy - qy * uy) / det;
  const double d = (qy * ux - py * vx) / det;
  out = AffineTransform::from_rows(a, b, dst[0].x - a * src[0].x - b * src[0].y, c, d,
                                   dst[0].y - c * src[0].x - d * src[0].y);
  return std::abs(out.linear_det()) > kSingularDet;
}

bool affine_least_squares(std::span<const Point2> src, std::span<const Point2> dst,
                          AffineTransform& out) {
  if (src.size() < 3 || src.size() != dst.size()) return false;
  double mx = 0.0, my = 0.0;
  for (const Point2& p : src) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(src.size());
  my /= static_cast<double>(src.size());
  std::array<double, 9> m{};
  std::array<double, 3> rx{}, ry{};
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double row[3] = {src[i].x - mx, src[i].y - my, 1.0};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(r * 3 + c)] += row[r] * row[c];
      rx[static_cast<std::size_t>(r)] += row[r] * dst[i].x;
      ry[static_cast<std::size_t>(r)] += row[r] * dst[i].y;
    }
  }
  std::array<double, 3> sx{}, sy{};
  if (!solve3(m, rx, sx) || !solve3(m, ry, sy)) return false;
  out = AffineTransform::from_rows(sx[0], sx[1], sx[2] - sx[0] * mx - sx[1] * my, sy[0], sy[1],
                                   sy[2] - sy[0] * mx - sy[1] * my);
  return std::abs(out.linear_det()) > kSingularDet;
}

AffineEstimate estimate_affine_msac(std::span<const Point2> src, std::span<const Point2> dst,
                                    const MsacOptions& opts) {
  if (src.size() != dst.size()) throw ParameterError("estimate_affine_msac: point lists differ in length");
  if (src.size() < kMinAffineMatches) {
    throw RegistrationInfeasible("estimate_affine_msac: need at least 3 correspondences");
  }
  const double tau = opts.effective_tau();
  if (!(tau > 0.0) || opts.max_iters < 1 || !(opts.confidence > 0.0 && opts.confidence < 1.0)) {
    throw ParameterError("estimate_affine_msac: bad options");
  }
  const double tau2 = tau * tau;
  const std::size_t n = src.size();
  Rng rng = make_rng(opts.seed, "msac");

  AffineTransform best;
  Scored best_score;
  bool found = false;
  int needed = opts.max_iters;
  int iter = 0;
  for (; iter < std::min(needed, opts.max_iters); ++iter) {
    std::array<std::size_t, 3> idx{};
    idx[0] = uniform_index(rng, n);
    do idx[1] = uniform_index(rng, n); while (idx[1] == idx[0]);
    do idx[2] = uniform_index(rng, n); while (idx[2] == idx[0] || idx[2] == idx[1]);
    AffineTransform hyp;
    if (!affine_from_three({src[idx[0]], src[idx[1]], src[idx[2]]},
                           {dst[idx[0]], dst[idx[1]], dst[idx[2]]}, hyp)) {
      continue;
    }
    const Scored s = score(hyp, src, dst, tau2);
    if (s.cost < best_score.cost) {
      best = hyp;
      best_score = s;
      found = true;
      const double w = static_cast<double>(s.inliers) / static_cast<double>(n);
      const double miss = 1.0 - w * w * w;
      if (miss <= 0.0) {
        needed = iter + 1;
      } else if (miss < 1.0) {
        const double k = std::log(1.0 - opts.confidence) / std::log(miss);
        needed = static_cast<int>(std::min<double>(std::ceil(k), opts.max_iters));
      }
    }
  }
  if (!found) throw DegenerateGeometry("estimate_affine_msac: every sample was collinear");

  // Least-squares refinement on the inlier set, repeated while it helps.
  for (int round = 0; round < 3; ++round) {
    const auto in = inlier_indices(best, src, dst, tau2);
    if (in.size() < kMinAffineMatches) break;
    std::vector<Point2> s_in, d_in;
    for (std::uint32_t i : in) {
      s_in.push_back(src[i]);
      d_in.push_back(dst[i]);
    }
    AffineTransform refit;
    if (!affine_least_squares(s_in, d_in, refit)) break;
    const Scored s = score(refit, src, dst, tau2);
    if (!(s.cost < best_score.cost)) break;
    best = refit;
    best_score = s;
  }

  AffineEstimate est;
  est.transform = best;
  est.inliers = inlier_indices(best, src, dst, tau2);
  est.cost = best_score.cost;
  est.iterations = iter;
  return est;
}

AffineEstimate estimate_affine_msac(std::span<const Match> matches, std::span<const Point2> pts_a,
                                    std::span<const Point2> pts_b, const MsacOptions& opts) {
  std::vector<Point2> src, dst;
  src.reserve(matches.size());
  dst.reserve(matches.size());
  for (const Match& m : matches) {
    if (m.a >= pts_a.size() || m.b >= pts_b.size()) throw ParameterError("match index out of range");
    src.push_back(pts_a[m.a]);
    dst.push_back(pts_b[m.b]);
  }
  return estimate_affine_msac(src, dst, opts);
}

double rfn(const std::array<double, 9>& m) {
  // F^-1 = adj(F) / det(F), so |F^-1|_F = |adj(F)|_F / |det F|.
  const std::array<double, 9> adj{
      m[4] * m[8] - m[5] * m[7], m[2] * m[7] - m[1] * m[8], m[1] * m[5] - m[2] * m[4],
      m[5] * m[6] - m[3] * m[8], m[0] * m[8] - m[2] * m[6], m[2] * m[3] - m[0] * m[5],
      m[3] * m[7] - m[4] * m[6], m[1] * m[6] - m[0] * m[7], m[0] * m[4] - m[1] * m[3]};
  const double det = m[0] * adj[0] + m[1] * adj[3] + m[2] * adj[6];
  if (!(std::abs(det) > kSingularDet)) return 0.0;
  double nf = 0.0, na = 0.0;
  for (int i = 0; i < 9; ++i) {
    nf += m[static_cast<std::size_t>(i)] * m[static_cast<std::size_t>(i)];
    na += adj[static_cast<std::size_t>(i)] * adj[static_cast<std::size_t>(i)];
  }
  return std::abs(det) / (std::sqrt(nf) * std::sqrt(na));
}

double rfn(const AffineTransform& f) {
  if (!(std::abs(f.linear_det()) > kSingularDet)) return 0.0;
  return rfn(f.m);
}

int select_candidate(std::span<const RankedCandidate> candidates) {
  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return candidates[static_cast<std::size_t>(x)].image_id < candidates[static_cast<std::size_t>(y)].image_id;
  });
  int best = -1;
  for (int i : order) {
    const RankedCandidate& c = candidates[static_cast<std::size_t>(i)];
    if (!(c.rfn > 0.0)) continue;
    if (best < 0) {
      best = i;
      continue;
    }
    const RankedCandidate& b = candidates[static_cast<std::size_t>(best)];
    if (c.rfn > b.rfn + kTieRfn) {
      best = i;
    } else if (std::abs(c.rfn - b.rfn) <= kTieRfn) {
      if (c.inlier_count > b.inlier_count ||
          (c.inlier_count == b.inlier_count && c.image_id < b.image_id)) {
        best = i;
      }
    }
  }
  return best;
}

Selection select_and_warp(const Image& probe, std::span<const CandidateImage> candidates) {
  std::vector<RankedCandidate> ranked;
  ranked.reserve(candidates.size());
  for (const CandidateImage& c : candidates) ranked.push_back(c.candidate);
  const int best = select_candidate(ranked);
  if (best < 0) throw NoContextError("no registered candidate with positive RFN");
  const CandidateImage& chosen = candidates[static_cast<std::size_t>(best)];
  if (chosen.image == nullptr) throw ParameterError("select_and_warp: candidate image missing");
  Selection sel;
  sel.chosen = chosen.candidate;
  sel.context = warp_affine(*chosen.image, chosen.candidate.transform, probe.width, probe.height);
  return sel;
}

RankedCandidate register_candidate(std::span<const Descriptor> probe,
                                   std::span<const Descriptor> candidate, std::uint64_t image_id,
                                   const MsacOptions& opts) {
  const auto matches = match_descriptors(probe, candidate);
  std::vector<Point2> src, dst;
  src.reserve(matches.size());
  dst.reserve(matches.size());
  for (const Match& m : matches) {
    src.push_back({candidate[m.b].keypoint.x, candidate[m.b].keypoint.y});
    dst.push_back({probe[m.a].keypoint.x, probe[m.a].keypoint.y});
  }
  const AffineEstimate est = estimate_affine_msac(src, dst, opts);
  RankedCandidate rc;
  rc.image_id = image_id;
  rc.transform = est.transform;
  rc.rfn = rfn(est.transform);
  rc.inlier_count = est.inliers.size();
  return rc;
}

}  // namespace ctxf

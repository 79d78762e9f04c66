#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "ctxf/error.hpp"
#include "ctxf/registration.hpp"
#include "affine_support.hpp"
#include "test_support.hpp"

using namespace ctxf;
using ctxf::testing::random_image;
using ctxf::testing::corner_error;
using ctxf::testing::random_affine;
using ctxf::testing::synth_correspondences;

namespace {

std::vector<Descriptor> random_descriptors(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Descriptor> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (float& v : out[i].vector) {
      v = static_cast<float>(normal(rng));
      norm += v * v;
    }
    for (float& v : out[i].vector) v = static_cast<float>(v / std::sqrt(norm));
    out[i].keypoint.x = static_cast<float>(uniform(rng, 0, 500));
    out[i].keypoint.y = static_cast<float>(uniform(rng, 0, 500));
  }
  return out;
}

}  // namespace

TEST(Matching, IdenticalListsPairIdentically) {
  const auto a = random_descriptors(200, 1);
  const auto m = match_descriptors(a, a);
  ASSERT_EQ(m.size(), a.size());
  for (const Match& x : m) {
    EXPECT_EQ(x.a, x.b);
    EXPECT_EQ(x.distance, 0.0f);
  }
}

TEST(Matching, DisjointRandomListsRarelyMatch) {
  const auto a = random_descriptors(300, 2);
  const auto b = random_descriptors(300, 3);
  EXPECT_LT(find_matches(a, b).size(), 300u * 5 / 100);
  EXPECT_THROW(match_descriptors(a, b), RegistrationInfeasible);
}

TEST(Matching, RemovedElementsRestrictPairing) {
  const auto a = random_descriptors(100, 4);
  std::vector<Descriptor> b;
  std::vector<std::uint32_t> origin;
  for (std::uint32_t i = 0; i < a.size(); ++i) {
    if (i % 10 == 3) continue;
    b.push_back(a[i]);
    origin.push_back(i);
  }
  const auto m = match_descriptors(a, b);
  EXPECT_EQ(m.size(), 90u);
  for (const Match& x : m) EXPECT_EQ(origin[x.b], x.a);
}

TEST(Matching, EmptyListIsInfeasible) {
  const auto a = random_descriptors(10, 5);
  EXPECT_THROW(match_descriptors(a, {}), RegistrationInfeasible);
  EXPECT_THROW(match_descriptors({}, a), RegistrationInfeasible);
}

TEST(Msac, NoiselessRecoveryIsExact) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const AffineTransform f0 = random_affine(rng);
    std::vector<Point2> src, dst;
    synth_correspondences(f0, 50, 0.0, 0.0, rng, src, dst);
    const auto est = estimate_affine_msac(src, dst);
    EXPECT_LT(corner_error(est.transform, f0, 512, 512), 1e-6);
    EXPECT_EQ(est.inliers.size(), 50u);
  }
}

TEST(Msac, RobustToOutliersAndNoise) {
  int successes = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    const AffineTransform f0 = random_affine(rng);
    std::vector<Point2> src, dst;
    synth_correspondences(f0, 100, 0.3, 1.0, rng, src, dst);
    MsacOptions opts;
    opts.seed = seed;
    const auto est = estimate_affine_msac(src, dst, opts);
    successes += corner_error(est.transform, f0, 512, 512) < 1.5;
  }
  EXPECT_GE(successes, 95);
}

TEST(Msac, CollinearPointsAreDegenerate) {
  std::vector<Point2> src, dst;
  for (int i = 0; i < 20; ++i) {
    src.push_back({i * 3.0, i * 2.0 + 1.0});
    dst.push_back({i * 3.0 + 5.0, i * 2.0});
  }
  MsacOptions opts;
  opts.max_iters = 200;
  EXPECT_THROW(estimate_affine_msac(src, dst, opts), DegenerateGeometry);
}

TEST(Msac, TooFewPointsIsInfeasible) {
  const std::vector<Point2> two{{0, 0}, {1, 1}};
  EXPECT_THROW(estimate_affine_msac(two, two), RegistrationInfeasible);
}

TEST(Msac, SeedDeterministic) {
  Rng rng(20);
  const AffineTransform f0 = random_affine(rng);
  std::vector<Point2> src, dst;
  synth_correspondences(f0, 80, 0.4, 1.0, rng, src, dst);
  MsacOptions opts;
  opts.seed = 5;
  const auto a = estimate_affine_msac(src, dst, opts);
  const auto b = estimate_affine_msac(src, dst, opts);
  EXPECT_EQ(a.transform.m, b.transform.m);
  EXPECT_EQ(a.inliers, b.inliers);
}

TEST(Msac, MatchOverloadUsesIndices) {
  const std::vector<Point2> pa{{0, 0}, {10, 0}, {0, 10}, {10, 10}, {5, 3}};
  std::vector<Point2> pb;
  for (const Point2& p : pa) pb.push_back({p.x + 7, p.y - 2});
  std::vector<Match> matches;
  for (std::uint32_t i = 0; i < pa.size(); ++i) matches.push_back({i, i, 0.0f});
  const auto est = estimate_affine_msac(matches, pa, pb);
  EXPECT_NEAR(est.transform(0, 2), 7.0, 1e-9);
  EXPECT_NEAR(est.transform(1, 2), -2.0, 1e-9);
}

TEST(ScaleFreeTau, UsesDiagonal) {
  MsacOptions opts;
  opts.scale_free_tau = true;
  opts.frame_diagonal = 1000.0;
  EXPECT_DOUBLE_EQ(opts.effective_tau(), 5.0);
}

TEST(Rfn, HandComputedValues) {
  EXPECT_NEAR(rfn(AffineTransform::identity()), 1.0 / 3.0, 1e-12);
  // |diag(2,2,1)|_F = 3 and |diag(.5,.5,1)|_F = sqrt(1.5).
  EXPECT_NEAR(rfn(AffineTransform::scaling(2, 2)), 1.0 / (3.0 * std::sqrt(1.5)), 1e-12);
  EXPECT_LT(rfn(AffineTransform::scaling(100, 0.01)), 1e-3);
  EXPECT_EQ(rfn(AffineTransform::scaling(1, 0)), 0.0);
}

TEST(Rfn, MatchesDirectFormulaWithExplicitInverse) {
  Rng rng(30);
  for (int i = 0; i < 200; ++i) {
    const AffineTransform f = random_affine(rng);
    const AffineTransform inv = *f.inverse();
    double nf = 0.0, ni = 0.0;
    for (int k = 0; k < 9; ++k) {
      nf += f.m[static_cast<std::size_t>(k)] * f.m[static_cast<std::size_t>(k)];
      ni += inv.m[static_cast<std::size_t>(k)] * inv.m[static_cast<std::size_t>(k)];
    }
    EXPECT_NEAR(rfn(f), 1.0 / (std::sqrt(nf) * std::sqrt(ni)), 1e-9);
    EXPECT_NEAR(rfn(f), rfn(inv), 1e-12);
  }
}

TEST(Rfn, BoundedByOneThirdOnRandomInvertibleMatrices) {
  Rng rng(40);
  int tested = 0;
  for (int i = 0; i < 10000; ++i) {
    std::array<double, 9> m;
    for (double& v : m) v = uniform(rng, -10, 10);
    const double r = rfn(m);
    if (r == 0.0) continue;
    ++tested;
    EXPECT_GT(r, 0.0);
    EXPECT_LE(r, 1.0 / 3.0 + 1e-15);
  }
  EXPECT_GT(tested, 9900);
}

TEST(Rfn, ScaledRotationsInRange) {
  for (double s : {0.5, 1.0, 3.0}) {
    for (double a : {0.0, 0.4, 2.0}) {
      const AffineTransform f = AffineTransform::rotation(a).compose(AffineTransform::scaling(s, s));
      EXPECT_GT(rfn(f), 0.0);
      EXPECT_LE(rfn(f), 1.0 / 3.0 + 1e-15);
    }
  }
}

TEST(Selection, HighestRfnWins) {
  const std::vector<RankedCandidate> c{{5, AffineTransform::scaling(2, 2), 2.0 / 9.0, 50},
                                       {9, AffineTransform::identity(), 1.0 / 3.0, 4}};
  EXPECT_EQ(select_candidate(c), 1);
}

TEST(Selection, TiesBrokenByInliersThenId) {
  std::vector<RankedCandidate> c{{7, {}, 0.25, 10}, {3, {}, 0.25 + 5e-13, 12}, {1, {}, 0.25, 12}};
  EXPECT_EQ(select_candidate(c), 2);
  c[2].inlier_count = 11;
  EXPECT_EQ(select_candidate(c), 1);
}

TEST(Selection, ArgmaxIgnoresMatchCountScaling) {
  Rng rng(50);
  std::vector<RankedCandidate> c;
  for (std::uint64_t i = 0; i < 30; ++i) {
    const AffineTransform f = random_affine(rng);
    c.push_back({i, f, rfn(f), static_cast<std::size_t>(uniform_index(rng, 100))});
  }
  const int base = select_candidate(c);
  for (auto& x : c) x.inlier_count *= 7;
  EXPECT_EQ(select_candidate(c), base);
}

TEST(Selection, UnusableCandidatesGiveNoContext) {
  const Image probe(32, 32, ColorSpace::Gray);
  const Image cand = random_image(32, 32, ColorSpace::Gray, 1);
  const std::vector<CandidateImage> none{{{1, AffineTransform::scaling(1, 0), 0.0, 10}, &cand}};
  EXPECT_THROW(select_and_warp(probe, none), NoContextError);
  EXPECT_THROW(select_and_warp(probe, {}), NoContextError);
}

TEST(Selection, IdentityCandidateWarpsToItself) {
  const Image probe(40, 30, ColorSpace::RGB);
  const Image cand = random_image(40, 30, ColorSpace::RGB, 2);
  const std::vector<CandidateImage> one{{{4, AffineTransform::identity(), 1.0 / 3.0, 10}, &cand}};
  const Selection sel = select_and_warp(probe, one);
  EXPECT_EQ(sel.chosen.image_id, 4u);
  EXPECT_EQ(sel.context.data, cand.data);
  EXPECT_EQ(sel.context.valid_count(), sel.context.pixel_count());
}

TEST(Selection, TranslatedCandidateLeavesLeftColumnsInvalid) {
  const Image probe(60, 40, ColorSpace::Gray);
  const Image cand = random_image(60, 40, ColorSpace::Gray, 3);
  const AffineTransform f = AffineTransform::translation(20, 0);
  const std::vector<CandidateImage> one{{{1, f, rfn(f), 10}, &cand}};
  const Selection sel = select_and_warp(probe, one);
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 60; ++x) EXPECT_EQ(sel.context.is_valid(x, y), x >= 20);
  }
}

TEST(RegisterCandidate, RecoversKnownShift) {
  auto cand = random_descriptors(120, 60);
  auto probe = cand;
  for (auto& d : probe) {
    d.keypoint.x += 12.0f;
    d.keypoint.y -= 4.0f;
  }
  const auto rc = register_candidate(probe, cand, 33);
  EXPECT_EQ(rc.image_id, 33u);
  EXPECT_EQ(rc.inlier_count, 120u);
  EXPECT_NEAR(rc.transform(0, 2), 12.0, 1e-3);
  EXPECT_NEAR(rc.transform(1, 2), -4.0, 1e-3);
  EXPECT_NEAR(rc.rfn, rfn(rc.transform), 1e-15);
}

#include "ctxf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "ctxf/error.hpp"
#include "ctxf/imaging.hpp"

namespace ctxf {

void RocAccumulator::add(const HeatMap& map, const Mask& mask) {
  if (map.width != mask.width || map.height != mask.height) {
    throw EvaluationError(fmt::format("heat map {}x{} does not match mask {}x{}", map.width,
                                      map.height, mask.width, mask.height));
  }
  for (std::size_t i = 0; i < map.pixel_count(); ++i) {
    if (!map.valid[i]) continue;
    (mask.bits[i] ? pos_ : neg_).push_back(map.scores[i]);
  }
}

void RocAccumulator::merge(const RocAccumulator& other) {
  pos_.insert(pos_.end(), other.pos_.begin(), other.pos_.end());
  neg_.insert(neg_.end(), other.neg_.begin(), other.neg_.end());
}

RocCurve RocAccumulator::finish() const {
  if (pos_.empty() || neg_.empty()) {
    throw EvaluationError(fmt::format("ROC needs both classes (positives {}, negatives {})",
                                      pos_.size(), neg_.size()));
  }
  std::vector<double> pos = pos_, neg = neg_;
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());

  RocCurve curve;
  curve.positives = pos.size();
  curve.negatives = neg.size();

  // Mann-Whitney form of the trapezoidal area over the full curve.
  double wins = 0.0;
  std::size_t below = 0;
  for (std::size_t i = 0; i < pos.size();) {
    std::size_t j = i;
    while (j < pos.size() && pos[j] == pos[i]) ++j;
    while (below < neg.size() && neg[below] < pos[i]) ++below;
    std::size_t equal = below;
    while (equal < neg.size() && neg[equal] == pos[i]) ++equal;
    wins += static_cast<double>(j - i) * (static_cast<double>(below) + 0.5 * static_cast<double>(equal - below));
    i = j;
  }
  curve.auc = wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));

  std::vector<double> pooled;
  pooled.reserve(pos.size() + neg.size());
  std::merge(pos.begin(), pos.end(), neg.begin(), neg.end(), std::back_inserter(pooled));
  const auto rate_at_or_above = [](const std::vector<double>& v, double t) {
    const auto it = std::lower_bound(v.begin(), v.end(), t);
    return static_cast<double>(v.end() - it) / static_cast<double>(v.size());
  };
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (int k = kRocThresholds; k >= 1; --k) {
    const double q = static_cast<double>(k) / (kRocThresholds + 1);
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(pooled.size() - 1));
    const double t = pooled[idx];
    curve.points.push_back({t, rate_at_or_above(neg, t), rate_at_or_above(pos, t)});
  }
  curve.points.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});
  return curve;
}

RocCurve roc(std::span<const HeatMap> maps, std::span<const Mask> masks) {
  if (maps.size() != masks.size()) {
    throw EvaluationError(fmt::format("{} heat maps but {} masks", maps.size(), masks.size()));
  }
  RocAccumulator acc;
  for (std::size_t i = 0; i < maps.size(); ++i) acc.add(maps[i], masks[i]);
  return acc.finish();
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "threshold,fpr,tpr\n";
  for (const RocPoint& p : curve.points) {
    out << fmt::format("{:.17g},{:.17g},{:.17g}\n", p.threshold, p.fpr, p.tpr);
  }
  out << fmt::format("auc,{:.17g}\n", curve.auc);
  if (!out) throw IoError("failed writing " + path.string());
}

RecallResult recall_at_rank(std::span<const QueryResult> results,
                            std::span<const std::set<std::uint64_t>> truth, std::size_t rank) {
  if (rank < 1) throw ParameterError("rank must be >= 1");
  if (results.size() != truth.size()) {
    throw EvaluationError(fmt::format("{} results but {} truth sets", results.size(), truth.size()));
  }
  RecallResult r;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (truth[i].empty()) {
      ++r.skipped;
      continue;
    }
    ++r.evaluated;
    const auto& ranked = results[i].ranked;
    const std::size_t n = std::min(rank, ranked.size());
    for (std::size_t k = 0; k < n; ++k) {
      if (truth[i].count(ranked[k].image_id)) {
        ++hits;
        break;
      }
    }
  }
  r.recall = r.evaluated ? static_cast<double>(hits) / static_cast<double>(r.evaluated) : 0.0;
  return r;
}

Image perturb_hsv(const Image& img, double delta, std::uint64_t seed) {
  if (!(delta >= 0.0 && delta < 1.0)) throw ParameterError(fmt::format("hsv delta {} outside [0,1)", delta));
  if (img.colorspace == ColorSpace::HSV) throw TypeError("perturb_hsv expects RGB or Gray input");
  Rng rng = make_rng(seed, "perturb_hsv");
  double factor[3];
  for (double& f : factor) {
    const double u = uniform(rng, 0.0, delta);
    f = uniform(rng, 1.0 - u, 1.0 + u);
  }
  if (delta == 0.0) return img;

  if (img.colorspace == ColorSpace::Gray) {
    // Zero saturation: hue and saturation scaling cannot change the pixel.
    Image out = img;
    for (double& v : out.data) v = std::clamp(v * factor[2], 0.0, 1.0);
    return out;
  }
  Image hsv = rgb_to_hsv(img);
  for (std::size_t i = 0; i < hsv.pixel_count(); ++i) {
    double* px = &hsv.data[i * 3];
    const double h = px[0] * factor[0];
    px[0] = h - std::floor(h);
    px[1] = std::clamp(px[1] * factor[1], 0.0, 1.0);
    px[2] = std::clamp(px[2] * factor[2], 0.0, 1.0);
  }
  Image out = hsv_to_rgb(hsv);
  out.valid = img.valid;
  return out;
}

std::uint64_t poisson_sample(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  if (mean < 10.0) {
    const double limit = std::exp(-mean);
    double prod = uniform(rng, 0.0, 1.0);
    std::uint64_t k = 0;
    while (prod > limit) {
      ++k;
      prod *= uniform(rng, 0.0, 1.0);
    }
    return k;
  }
  // Hormann's PTRS transformed rejection.
  const double smu = std::sqrt(mean);
  const double b = 0.931 + 2.53 * smu;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);
  for (;;) {
    const double u = uniform(rng, 0.0, 1.0) - 0.5;
    const double v = uniform(rng, 0.0, 1.0);
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -mean + k * log_mean - std::lgamma(k + 1.0)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

Image perturb_poisson_peak(const Image& img, double peak, std::uint64_t seed) {
  if (!(peak > 0.0)) throw ParameterError(fmt::format("poisson peak {} must be positive", peak));
  Rng rng = make_rng(seed, "perturb_poisson", 1);
  Image out = img;
  for (double& v : out.data) {
    v = std::min(1.0, static_cast<double>(poisson_sample(rng, std::max(0.0, v) * peak)) / peak);
  }
  return out;
}

Image perturb_poisson(const Image& img, double peak_lo, double peak_hi, std::uint64_t seed) {
  if (!(peak_lo > 0.0) || !(peak_hi >= peak_lo)) {
    throw ParameterError(fmt::format("poisson peak range [{}, {}] invalid", peak_lo, peak_hi));
  }
  Rng rng = make_rng(seed, "perturb_poisson");
  return perturb_poisson_peak(img, uniform(rng, peak_lo, peak_hi), seed);
}

double rotation_angle_for(double max_deg, std::uint64_t seed) {
  Rng rng = make_rng(seed, "perturb_rotate");
  return uniform(rng, -max_deg, max_deg);
}

Image rotate_about_center(const Image& img, double degrees) {
  const Point2 center{(img.width - 1) / 2.0, (img.height - 1) / 2.0};
  const auto t = AffineTransform::rotation(degrees * M_PI / 180.0, center);
  return warp_affine(img, t, img.width, img.height);
}

Image perturb_rotate(const Image& img, double max_deg, std::uint64_t seed) {
  if (!(max_deg >= 0.0)) throw ParameterError("max rotation must be non-negative");
  const double deg = rotation_angle_for(max_deg, seed);
  if (deg == 0.0) return img;
  return rotate_about_center(img, deg);
}

}  // namespace ctxf

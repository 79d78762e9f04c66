#include "ctxf/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>

#include "ctxf/error.hpp"
#include "ctxf/geometry.hpp"
#include "ctxf/image_io.hpp"
#include "ctxf/imaging.hpp"
#include "ctxf/rng.hpp"

namespace ctxf {

namespace {

constexpr double kPi = std::numbers::pi;

using Color = std::array<double, 3>;

Color random_color(Rng& rng) {
  return {uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95)};
}

enum class ShapeKind { Ellipse, Rect, Triangle, Ring };
enum class Fill { Flat, Stripes, Graded };

struct Shape {
  ShapeKind kind = ShapeKind::Ellipse;
  Fill fill = Fill::Flat;
  double cx = 0, cy = 0, rx = 1, ry = 1, angle = 0;
  std::array<Point2, 3> tri{};
  Color a{}, b{};
  double period = 8.0, stripe_angle = 0.0;

  // Point in shape-local (unrotated) coordinates.
  Point2 local(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * dx + s * dy, -s * dx + c * dy};
  }

  bool inside(double x, double y) const {
    switch (kind) {
      case ShapeKind::Ellipse: {
        const Point2 p = local(x, y);
        return (p.x * p.x) / (rx * rx) + (p.y * p.y) / (ry * ry) <= 1.0;
      }
      case ShapeKind::Ring: {
        const Point2 p = local(x, y);
        const double q = (p.x * p.x) / (rx * rx) + (p.y * p.y) / (ry * ry);
        return q <= 1.0 && q >= 0.45;
      }
      case ShapeKind::Rect: {
        const Point2 p = local(x, y);
        return std::abs(p.x) <= rx && std::abs(p.y) <= ry;
      }
      case ShapeKind::Triangle: {
        auto edge = [&](const Point2& p0, const Point2& p1) {
          return (p1.x - p0.x) * (y - p0.y) - (p1.y - p0.y) * (x - p0.x);
        };
        const double e0 = edge(tri[0], tri[1]);
        const double e1 = edge(tri[1], tri[2]);
        const double e2 = edge(tri[2], tri[0]);
        return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      }
    }
    return false;
  }

  Color color_at(double x, double y) const {
    switch (fill) {
      case Fill::Flat:
        return a;
      case Fill::Stripes: {
        const double t = x * std::cos(stripe_angle) + y * std::sin(stripe_angle);
        return std::fmod(std::abs(t), period) < period / 2 ? a : b;
      }
      case Fill::Graded: {
        const Point2 p = local(x, y);
        const double t = std::clamp(0.5 + 0.5 * p.x / std::max(rx, 1.0), 0.0, 1.0);
        return {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])};
      }
    }
    return a;
  }

  void bounds(int w, int h, int& x0, int& y0, int& x1, int& y1) const {
    double minx, maxx, miny, maxy;
    if (kind == ShapeKind::Triangle) {
      minx = std::min({tri[0].x, tri[1].x, tri[2].x});
      maxx = std::max({tri[0].x, tri[1].x, tri[2].x});
      miny = std::min({tri[0].y, tri[1].y, tri[2].y});
      maxy = std::max({tri[0].y, tri[1].y, tri[2].y});
    } else {
      const double r = std::hypot(rx, ry);
      minx = cx - r;
      maxx = cx + r;
      miny = cy - r;
      maxy = cy + r;
    }
    x0 = std::max(0, static_cast<int>(std::floor(minx)) - 1);
    y0 = std::max(0, static_cast<int>(std::floor(miny)) - 1);
    x1 = std::min(w - 1, static_cast<int>(std::ceil(maxx)) + 1);
    y1 = std::min(h - 1, static_cast<int>(std::ceil(maxy)) + 1);
  }
};

Shape random_shape(Rng& rng, int w, int h) {
  Shape s;
  const int kind = static_cast<int>(uniform_index(rng, 4));
  s.kind = static_cast<ShapeKind>(kind);
  const int fill = static_cast<int>(uniform_index(rng, 3));
  s.fill = static_cast<Fill>(fill);
  const double dim = std::min(w, h);
  s.cx = uniform(rng, -0.05 * w, 1.05 * w);
  s.cy = uniform(rng, -0.05 * h, 1.05 * h);
  s.rx = uniform(rng, 0.02, 0.16) * dim;
  s.ry = uniform(rng, 0.02, 0.16) * dim;
  s.angle = uniform(rng, -kPi, kPi);
  for (auto& p : s.tri) {
    const double a = uniform(rng, -kPi, kPi);
    const double r = uniform(rng, 0.04, 0.2) * dim;
    p = {s.cx + r * std::cos(a), s.cy + r * std::sin(a)};
  }
  s.a = random_color(rng);
  s.b = random_color(rng);
  s.period = uniform(rng, 4.0, 14.0);
  s.stripe_angle = uniform(rng, -kPi, kPi);
  return s;
}

void paint(Image& img, const Shape& s) {
  int x0, y0, x1, y1;
  s.bounds(img.width, img.height, x0, y0, x1, y1);
  static constexpr double kOffsets[2] = {-0.25, 0.25};
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      int hits = 0;
      for (double oy : kOffsets) {
        for (double ox : kOffsets) hits += s.inside(x + ox, y + oy) ? 1 : 0;
      }
      if (hits == 0) continue;
      const double cover = hits / 4.0;
      const Color col = s.color_at(x, y);
      for (int c = 0; c < 3; ++c) {
        double& v = img.at(x, y, c);
        v = (1.0 - cover) * v + cover * col[c];
      }
    }
  }
}

// Inside test and signed distance (positive inside) for a simple polygon.
double polygon_signed_distance(const std::vector<Point2>& poly, double x, double y) {
  bool inside = false;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point2& a = poly[i];
    const Point2& b = poly[j];
    if (((a.y > y) != (b.y > y)) && (x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x)) {
      inside = !inside;
    }
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    double t = len2 > 0 ? ((x - a.x) * ex + (y - a.y) * ey) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = a.x + t * ex - x, dy = a.y + t * ey - y;
    best = std::min(best, std::hypot(dx, dy));
  }
  return inside ? best : -best;
}

double polygon_area(const std::vector<Point2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    a += poly[j].x * poly[i].y - poly[i].x * poly[j].y;
  }
  return std::abs(a) / 2.0;
}

}  // namespace

Image render_scene(std::uint64_t scene_seed, const SceneOptions& opts) {
  Rng rng = make_rng(scene_seed, "scene");
  const int w = opts.width;
  const int h = opts.height;
  Image img(w, h, ColorSpace::RGB);

  const Color c0 = random_color(rng);
  const Color c1 = random_color(rng);
  const double ga = uniform(rng, -kPi, kPi);
  const double freq = uniform(rng, 0.5, 3.0) * 2.0 * kPi / std::max(w, h);
  const double phase = uniform(rng, 0, 2 * kPi);
  const double dim = std::max(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double t = std::clamp(0.5 + (std::cos(ga) * (x - w / 2.0) + std::sin(ga) * (y - h / 2.0)) / dim, 0.0, 1.0);
      const double wave = 0.08 * std::sin(freq * (x + 0.7 * y) + phase);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = c0[c] + t * (c1[c] - c0[c]) + wave;
    }
  }

  const int shapes = opts.min_shapes +
                     static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(opts.max_shapes - opts.min_shapes + 1)));
  for (int i = 0; i < shapes; ++i) paint(img, random_shape(rng, w, h));

  Rng texture = make_rng(scene_seed, "texture");
  Rng camera = make_rng(scene_seed, "camera");
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double k = opts.prnu_sigma * normal(camera);
      for (int c = 0; c < 3; ++c) {
        double& v = img.at(x, y, c);
        v = (v + opts.texture_sigma * normal(texture)) * (1.0 + k);
      }
    }
  }
  clamp_unit(img);
  return img;
}

Image ProceduralCorpus::image(std::size_t i) const {
  if (i >= count_) throw IndexError("procedural corpus index out of range");
  return render_scene(substream_seed(seed_, "corpus", i), opts_);
}

FileCorpus FileCorpus::from_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> paths;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  return FileCorpus(std::move(paths));
}

Image FileCorpus::image(std::size_t i) const { return read_image(paths_.at(i)); }

Image SyntheticGallery::image(std::size_t i) const {
  const GalleryEntry& e = entries_.at(i);
  return e.is_host ? hosts_->image(e.corpus_index) : distractors_->image(e.corpus_index);
}

Image SyntheticGallery::image_by_id(std::uint64_t id) const {
  // Entries are stored in id order.
  if (id < entries_.size() && entries_[id].image_id == id) return image(id);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].image_id == id) return image(i);
  }
  throw IndexError("unknown gallery image id " + std::to_string(id));
}

SyntheticDataset synthesize_splices(std::shared_ptr<const Corpus> hosts, const Corpus& donors,
                                    std::shared_ptr<const Corpus> distractor_pool,
                                    std::size_t count, std::size_t distractors, std::uint64_t seed,
                                    const SpliceOptions& opts) {
  if (!hosts || hosts->size() == 0 || donors.size() == 0) {
    throw ParameterError("synthesize_splices: corpora must be non-empty");
  }
  if (hosts->size() < count) throw ParameterError("synthesize_splices: not enough host images");
  if (distractors > 0 && (!distractor_pool || distractor_pool->size() < distractors)) {
    throw ParameterError("synthesize_splices: not enough distractor images");
  }

  SyntheticDataset out;
  out.splices.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Rng rng = make_rng(seed, "splice", n);
    const Image host = hosts->image(n);
    const std::size_t donor_index = uniform_index(rng, donors.size());
    const Image donor = donors.image(donor_index);
    if (host.colorspace != ColorSpace::RGB || donor.colorspace != ColorSpace::RGB) {
      throw TypeError("synthesize_splices: corpora must be RGB");
    }
    const int w = host.width;
    const int h = host.height;

    bool done = false;
    for (int attempt = 0; attempt < opts.max_attempts && !done; ++attempt) {
      // Star-shaped polygon around the origin, rescaled to the target area.
      const int vertices = 5 + static_cast<int>(uniform_index(rng, 8));
      std::vector<double> angles(static_cast<std::size_t>(vertices));
      for (double& a : angles) a = uniform(rng, 0.0, 2.0 * kPi);
      std::sort(angles.begin(), angles.end());
      std::vector<Point2> local;
      for (double a : angles) {
        const double r = uniform(rng, 0.45, 1.0);
        local.push_back({r * std::cos(a), r * std::sin(a)});
      }
      const double unit_area = polygon_area(local);
      const double target = uniform(rng, opts.min_area, opts.max_area) * w * h;
      if (unit_area < 1e-3) continue;
      const double radius = std::sqrt(target / unit_area);

      const double scale = uniform(rng, opts.min_scale, opts.max_scale);
      const double rot = uniform(rng, -opts.max_rotation_deg, opts.max_rotation_deg) * kPi / 180.0;
      const double extent = radius * scale;
      if (2 * extent >= w || 2 * extent >= h || 2 * radius >= donor.width || 2 * radius >= donor.height) {
        continue;
      }
      const Point2 dst_c{uniform(rng, extent, w - extent), uniform(rng, extent, h - extent)};
      const Point2 src_c{uniform(rng, radius, donor.width - radius),
                         uniform(rng, radius, donor.height - radius)};

      std::vector<Point2> poly;
      const double cr = std::cos(rot), sr = std::sin(rot);
      for (const Point2& p : local) {
        const double x = p.x * extent, y = p.y * extent;
        poly.push_back({dst_c.x + cr * x - sr * y, dst_c.y + sr * x + cr * y});
      }

      Mask mask(w, h);
      Image probe = host;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double sd = polygon_signed_distance(poly, x, y);
          const double alpha = std::clamp(0.5 + sd, 0.0, 1.0);
          if (sd >= 0.0) mask.at(x, y) = 1;
          if (alpha <= 0.0) continue;
          // Probe pixel -> donor pixel: undo translation, rotation and scale.
          const double px = x - dst_c.x, py = y - dst_c.y;
          const double ux = (cr * px + sr * py) / scale;
          const double uy = (-sr * px + cr * py) / scale;
          for (int c = 0; c < 3; ++c) {
            double v = 0.0;
            if (!sample_bilinear(donor, src_c.x + ux, src_c.y + uy, c, v)) v = host.at(x, y, c);
            double& dst = probe.at(x, y, c);
            dst = std::clamp((1.0 - alpha) * dst + alpha * v, 0.0, 1.0);
          }
        }
      }
      const double fraction = static_cast<double>(mask.count()) / (static_cast<double>(w) * h);
      if (fraction < 0.01 || fraction > 0.5) continue;

      SpliceSample sample;
      sample.record.probe_path = "probes/probe_" + std::to_string(n) + ".png";
      sample.record.mask_path = "masks/mask_" + std::to_string(n) + ".png";
      sample.record.host_id = n;
      sample.record.donor_id = donor_index;
      sample.record.seed = substream_seed(seed, "splice", n);
      sample.record.region_fraction = fraction;
      sample.probe = std::move(probe);
      sample.mask = std::move(mask);
      out.splices.push_back(std::move(sample));
      done = true;
    }
    if (!done) {
      throw ParameterError("synthesize_splices: could not place a non-degenerate region for record " +
                           std::to_string(n));
    }
  }

  std::vector<GalleryEntry> entries;
  entries.reserve(count + distractors);
  for (std::size_t i = 0; i < count; ++i) entries.push_back({i, true, i});
  for (std::size_t i = 0; i < distractors; ++i) entries.push_back({count + i, false, i});
  out.gallery = std::make_shared<SyntheticGallery>(std::move(hosts), std::move(distractor_pool),
                                                   std::move(entries));
  return out;
}

void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& data) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream gallery(dir / "gallery.jsonl");
    if (!gallery) throw IoError("cannot write gallery manifest in " + dir.string());
    for (std::size_t i = 0; i < data.gallery->size(); ++i) {
      const GalleryEntry& e = data.gallery->entries()[i];
      const std::string rel = "gallery/img_" + std::to_string(e.image_id) + ".png";
      write_image(dir / rel, data.gallery->image(i));
      nlohmann::json j{{"image_id", e.image_id}, {"path", rel}};
      gallery << j.dump() << '\n';
    }
  }
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw IoError("cannot write manifest in " + dir.string());
  for (const SpliceSample& s : data.splices) {
    write_image(dir / s.record.probe_path, s.probe);
    write_mask(dir / s.record.mask_path, s.mask);
    manifest << splice_record_to_json(s.record) << '\n';
  }
}

std::string splice_record_to_json(const SpliceRecord& r) {
  nlohmann::json j{{"probe", r.probe_path},         {"host_id", r.host_id},
                   {"donor_id", r.donor_id},        {"mask", r.mask_path},
                   {"perturbation", r.perturbation}, {"seed", r.seed},
                   {"region_fraction", r.region_fraction}};
  return j.dump();
}

SpliceRecord splice_record_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    SpliceRecord r;
    r.probe_path = j.at("probe").get<std::string>();
    r.host_id = j.value("host_id", std::uint64_t{0});
    r.donor_id = j.value("donor_id", std::uint64_t{0});
    r.mask_path = j.value("mask", std::string{});
    r.perturbation = j.value("perturbation", std::string{"none"});
    r.seed = j.value("seed", std::uint64_t{0});
    r.region_fraction = j.value("region_fraction", 0.0);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest line: ") + e.what());
  }
}

}  // namespace ctxf

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ctxf/image.hpp"

namespace ctxf {

/// Procedural scene: smooth background, overlapping antialiased shapes with
/// flat, striped or graded fills, fine content texture, and a multiplicative
/// per-camera noise pattern.
struct SceneOptions {
  int width = 256;
  int height = 256;
  int min_shapes = 25;
  int max_shapes = 45;
  double texture_sigma = 0.01;
  double prnu_sigma = 0.02;
};

Image render_scene(std::uint64_t scene_seed, const SceneOptions& opts = {});

/// Indexed collection of images.
class Corpus {
 public:
  virtual ~Corpus() = default;
  [[nodiscard]] virtual std::size_t size() const = 0;
  [[nodiscard]] virtual Image image(std::size_t i) const = 0;
};

class ProceduralCorpus final : public Corpus {
 public:
  ProceduralCorpus(std::uint64_t seed, std::size_t count, SceneOptions opts = {})
      : seed_(seed), count_(count), opts_(opts) {}
  [[nodiscard]] std::size_t size() const override { return count_; }
  [[nodiscard]] Image image(std::size_t i) const override;

 private:
  std::uint64_t seed_;
  std::size_t count_;
  SceneOptions opts_;
};

class FileCorpus final : public Corpus {
 public:
  explicit FileCorpus(std::vector<std::filesystem::path> paths) : paths_(std::move(paths)) {}
  /// All PNG/JPEG files under `dir`, sorted by path.
  static FileCorpus from_directory(const std::filesystem::path& dir);
  [[nodiscard]] std::size_t size() const override { return paths_.size(); }
  [[nodiscard]] Image image(std::size_t i) const override;

 private:
  std::vector<std::filesystem::path> paths_;
};

struct SpliceRecord {
  std::string probe_path;
  std::uint64_t host_id = 0;
  std::uint64_t donor_id = 0;
  std::string mask_path;
  std::string perturbation = "none";
  std::uint64_t seed = 0;
  // Geometry of the paste, kept for diagnostics.
  double region_fraction = 0.0;
};

/// One JSON object per line in the dataset manifest.
std::string splice_record_to_json(const SpliceRecord& r);
/// Throws FormatError on malformed input.
SpliceRecord splice_record_from_json(const std::string& line);

struct SpliceSample {
  SpliceRecord record;
  Image probe;
  Mask mask;
};

struct GalleryEntry {
  std::uint64_t image_id = 0;
  bool is_host = false;
  std::size_t corpus_index = 0;
};

/// Gallery whose images are regenerated from their corpora on demand.
class SyntheticGallery {
 public:
  SyntheticGallery(std::shared_ptr<const Corpus> hosts, std::shared_ptr<const Corpus> distractors,
                   std::vector<GalleryEntry> entries)
      : hosts_(std::move(hosts)), distractors_(std::move(distractors)), entries_(std::move(entries)) {}

  [[nodiscard]] const std::vector<GalleryEntry>& entries() const { return entries_; }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] Image image(std::size_t i) const;
  /// Throws IndexError for an unknown id.
  [[nodiscard]] Image image_by_id(std::uint64_t id) const;

 private:
  std::shared_ptr<const Corpus> hosts_;
  std::shared_ptr<const Corpus> distractors_;
  std::vector<GalleryEntry> entries_;
};

struct SyntheticDataset {
  std::vector<SpliceSample> splices;
  std::shared_ptr<SyntheticGallery> gallery;
};

struct SpliceOptions {
  double min_area = 0.02;
  double max_area = 0.25;
  double min_scale = 0.7;
  double max_scale = 1.3;
  double max_rotation_deg = 20.0;
  int max_attempts = 100;
};

/// Builds `count` splices. Record i pastes a polygon cut from a random donor
/// onto host i (hosts are used in order, so `hosts` must hold >= count
/// images); the unmodified hosts get gallery ids [0, count) and the
/// `distractors` unrelated images ids [count, count + distractors).
SyntheticDataset synthesize_splices(std::shared_ptr<const Corpus> hosts, const Corpus& donors,
                                    std::shared_ptr<const Corpus> distractor_pool,
                                    std::size_t count, std::size_t distractors, std::uint64_t seed,
                                    const SpliceOptions& opts = {});

/// Writes gallery images, probes, masks, `manifest.jsonl` (one SpliceRecord
/// per line) and `gallery.jsonl` (image_id, path) under `dir`. Paths inside
/// the manifests are relative to `dir`.
void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& data);

}  // namespace ctxf

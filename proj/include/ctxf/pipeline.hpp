#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxf/comparators.hpp"
#include "ctxf/evaluation.hpp"
#include "ctxf/features.hpp"
#include "ctxf/forest_index.hpp"
#include "ctxf/registration.hpp"
#include "ctxf/synth.hpp"

namespace ctxf {

struct PipelineConfig {
  std::filesystem::path index_path;
  std::size_t retrieved = 100;
  std::size_t checks = kDefaultChecks;
  std::vector<Method> methods{Method::Irpsnr};
  ComparatorConfig comparator;
  FeatureOptions features;
  MsacOptions msac;
  double rfn_floor = 1e-3;
  /// A candidate whose MSAC fit keeps fewer inliers than this has not registered.
  std::size_t min_inliers = 6;
  std::filesystem::path output_dir = "ctxf_out";
  bool write_heatmaps = true;
  std::uint64_t seed = 0;
  unsigned workers = 0;

  /// Throws ConfigError.
  void validate() const;
};

/// Applies the [pipeline], [comparators], [features] and [registration]
/// tables of a parsed config over `base`. Unknown keys are a ConfigError.
PipelineConfig apply_config(const nlohmann::json& doc, PipelineConfig base = {});

enum class ProbeStatus { Ok, NoContext, Degenerate, Failed };
std::string_view status_name(ProbeStatus s);

struct ProbeReport {
  std::string probe_id;
  std::string probe_path;
  std::string mask_path;  // absolute; empty when the manifest has none
  ProbeStatus status = ProbeStatus::Failed;
  std::optional<RankedCandidate> chosen;
  std::size_t retrieved = 0;
  std::size_t registered = 0;
  std::map<Method, std::string> heatmaps;  // method -> sidecar path
  std::string message;
};

/// One JSON object per line; the transform is the 9 row-major entries.
std::string report_to_json(const ProbeReport& r);

struct ProbeOutcome {
  ProbeReport report;
  std::map<Method, HeatMap> maps;
};

/// Supplies gallery images by id.
using ImageSource = std::function<Image(std::uint64_t)>;

class Pipeline {
 public:
  /// Loads cfg.index_path; candidate images are read from the paths stored
  /// in the index, relative to the index file's directory.
  explicit Pipeline(PipelineConfig cfg);
  Pipeline(PipelineConfig cfg, std::shared_ptr<const ForestIndex> index, ImageSource images);

  /// Search, register, select, warp and compare. Heat maps are written to
  /// output_dir/heatmaps when cfg.write_heatmaps is set; no heat map is
  /// produced unless the status is Ok.
  [[nodiscard]] ProbeOutcome run_probe(const Image& probe, const std::string& probe_id) const;

  [[nodiscard]] const PipelineConfig& config() const { return cfg_; }
  [[nodiscard]] const ForestIndex& index() const { return *index_; }

 private:
  PipelineConfig cfg_;
  std::shared_ptr<const ForestIndex> index_;
  ImageSource images_;
};

struct MethodSummary {
  Method method = Method::Irpsnr;
  std::size_t probes = 0;  // probes contributing pixels
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::optional<double> auc;
};

struct BatchSummary {
  std::vector<ProbeReport> reports;  // manifest order
  std::vector<MethodSummary> methods;
  std::map<ProbeStatus, std::size_t> status_counts;
  [[nodiscard]] bool all_failed() const;
};

/// Runs every manifest entry (JSON-lines SpliceRecords, paths relative to
/// the manifest) and writes reports.jsonl, summary.csv and one roc_<method>.csv
/// per method with pooled pixels under cfg.output_dir. Per-probe errors are
/// recorded as Failed reports.
BatchSummary run_batch(const std::filesystem::path& manifest, const Pipeline& pipeline);
/// Same over already-loaded records; `base_dir` resolves relative paths.
BatchSummary run_batch(const std::vector<SpliceRecord>& records, const std::filesystem::path& base_dir,
                       const Pipeline& pipeline);

std::vector<SpliceRecord> read_manifest(const std::filesystem::path& manifest);
std::string summary_csv(const BatchSummary& summary);

/// Extracts features from every image listed in a gallery manifest
/// (JSON lines with image_id and path) and builds the forest. Stored paths
/// are made relative to `index_dir` when possible.
ForestIndex build_gallery_index(const std::filesystem::path& gallery_manifest,
                                const std::filesystem::path& index_dir, const ForestOptions& forest,
                                const FeatureOptions& features);

}  // namespace ctxf

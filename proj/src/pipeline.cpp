#include "ctxf/pipeline.hpp"

#include <fstream>
#include <mutex>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ctxf/error.hpp"
#include "ctxf/image_io.hpp"
#include "ctxf/imaging.hpp"
#include "ctxf/parallel.hpp"
#include "ctxf/rng.hpp"

namespace ctxf {
namespace {

using nlohmann::json;

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<std::int64_t>() < 0) throw ConfigError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    } else {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const ConfigError&) {
    throw ConfigError(fmt::format("config key '{}' has the wrong type", key));
  }
}

// Calls fn(key, value) for each entry of doc[table]; fn returns false for
// unknown keys.
template <typename Fn>
void each_key(const json& doc, const std::string& table, Fn&& fn) {
  if (!doc.contains(table)) return;
  const json& t = doc.at(table);
  if (!t.is_object()) throw ConfigError("config entry '" + table + "' must be a table");
  for (const auto& [key, value] : t.items()) {
    if (!fn(key, value)) throw ConfigError(fmt::format("unknown config key '{}.{}'", table, key));
  }
}

Image as_rgb(const Image& img) {
  if (img.colorspace == ColorSpace::RGB) return img;
  if (img.colorspace == ColorSpace::HSV) return hsv_to_rgb(img);
  Image out(img.width, img.height, ColorSpace::RGB);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) out.data[i * 3 + c] = img.data[i];
  }
  out.valid = img.valid;
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

void PipelineConfig::validate() const {
  if (retrieved < 1) throw ConfigError("retrieved (N) must be >= 1");
  if (checks < 1) throw ConfigError("checks must be >= 1");
  if (!(rfn_floor > 0.0 && rfn_floor < 1.0 / 3.0)) {
    throw ConfigError(fmt::format("rfn_floor {} outside (0, 1/3)", rfn_floor));
  }
  if (min_inliers < kMinAffineMatches) throw ConfigError("min_inliers must be >= 3");
  if (methods.empty()) throw ConfigError("at least one comparator is required");
  try {
    comparator.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

PipelineConfig apply_config(const json& doc, PipelineConfig cfg) {
  for (const auto& [table, _] : doc.items()) {
    if (table != "pipeline" && table != "comparators" && table != "features" && table != "registration") {
      throw ConfigError("unknown config table '" + table + "'");
    }
  }
  each_key(doc, "pipeline", [&](const std::string& k, const json& v) {
    if (k == "index") cfg.index_path = get_as<std::string>(v, k);
    else if (k == "retrieved") cfg.retrieved = get_as<std::size_t>(v, k);
    else if (k == "checks") cfg.checks = get_as<std::size_t>(v, k);
    else if (k == "rfn_floor") cfg.rfn_floor = get_as<double>(v, k);
    else if (k == "min_inliers") cfg.min_inliers = get_as<std::size_t>(v, k);
    else if (k == "output") cfg.output_dir = get_as<std::string>(v, k);
    else if (k == "write_heatmaps") cfg.write_heatmaps = get_as<bool>(v, k);
    else if (k == "seed") cfg.seed = get_as<std::uint64_t>(v, k);
    else if (k == "workers") cfg.workers = get_as<unsigned>(v, k);
    else if (k == "comparators") {
      if (!v.is_array()) throw ConfigError("pipeline.comparators must be an array");
      cfg.methods.clear();
      for (const json& m : v) {
        try {
          cfg.methods.push_back(method_from_name(get_as<std::string>(m, k)));
        } catch (const ParameterError& e) {
          throw ConfigError(e.what());
        }
      }
    } else {
      return false;
    }
    return true;
  });
  ComparatorConfig& c = cfg.comparator;
  each_key(doc, "comparators", [&](const std::string& k, const json& v) {
    if (k == "sigma_g") c.sigma_g = get_as<double>(v, k);
    else if (k == "prnu_block") c.prnu_block = get_as<int>(v, k);
    else if (k == "prnu_stride") c.prnu_stride = get_as<int>(v, k);
    else if (k == "prnu_wavelet_levels") c.prnu_wavelet_levels = get_as<int>(v, k);
    else if (k == "prnu_sigma0") c.prnu_sigma0 = get_as<double>(v, k);
    else if (k == "ssim_radius") c.ssim_radius = get_as<int>(v, k);
    else if (k == "hist_radius") c.hist_radius = get_as<int>(v, k);
    else if (k == "hist_stride") c.hist_stride = get_as<int>(v, k);
    else if (k == "hsvks_stephens") c.hsvks_stephens = get_as<bool>(v, k);
    else if (k == "pm_patch") c.pm_patch = get_as<int>(v, k);
    else if (k == "pm_stride") c.pm_stride = get_as<int>(v, k);
    else if (k == "pm_iters") c.pm_iters = get_as<int>(v, k);
    else if (k == "pm_min_scale") c.pm_min_scale = get_as<double>(v, k);
    else if (k == "pm_max_scale") c.pm_max_scale = get_as<double>(v, k);
    else if (k == "pm_identity_prior") c.pm_identity_prior = get_as<bool>(v, k);
    else if (k == "full_density") c.full_density = get_as<bool>(v, k);
    else return false;
    return true;
  });
  each_key(doc, "features", [&](const std::string& k, const json& v) {
    if (k == "max_points") cfg.features.max_points = get_as<std::size_t>(v, k);
    else if (k == "octaves") cfg.features.octaves = get_as<int>(v, k);
    else if (k == "intervals") cfg.features.intervals = get_as<int>(v, k);
    else if (k == "threshold") cfg.features.threshold = get_as<double>(v, k);
    else if (k == "upright") cfg.features.upright = get_as<bool>(v, k);
    else return false;
    return true;
  });
  each_key(doc, "registration", [&](const std::string& k, const json& v) {
    if (k == "tau") cfg.msac.tau = get_as<double>(v, k);
    else if (k == "max_iters") cfg.msac.max_iters = get_as<int>(v, k);
    else if (k == "confidence") cfg.msac.confidence = get_as<double>(v, k);
    else if (k == "scale_free_tau") cfg.msac.scale_free_tau = get_as<bool>(v, k);
    else return false;
    return true;
  });
  return cfg;
}

std::string_view status_name(ProbeStatus s) {
  switch (s) {
    case ProbeStatus::Ok: return "ok";
    case ProbeStatus::NoContext: return "no-context";
    case ProbeStatus::Degenerate: return "degenerate";
    case ProbeStatus::Failed: return "failed";
  }
  return "failed";
}

std::string report_to_json(const ProbeReport& r) {
  json j{{"probe_id", r.probe_id}, {"probe", r.probe_path}, {"mask", r.mask_path}, {"status", status_name(r.status)},
         {"retrieved", r.retrieved}, {"registered", r.registered}};
  if (r.chosen) {
    j["candidate_id"] = r.chosen->image_id;
    j["transform"] = r.chosen->transform.m;
    j["rfn"] = r.chosen->rfn;
    j["inliers"] = r.chosen->inlier_count;
  } else {
    j["candidate_id"] = nullptr;
  }
  json maps = json::object();
  for (const auto& [m, path] : r.heatmaps) maps[std::string(method_name(m))] = path;
  j["heatmaps"] = maps;
  if (!r.message.empty()) j["message"] = r.message;
  return j.dump();
}

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.index_path.empty()) throw ConfigError("no index path configured");
  if (!std::filesystem::exists(cfg_.index_path)) {
    throw ConfigError("index not found: " + cfg_.index_path.string());
  }
  auto index = std::make_shared<ForestIndex>(ForestIndex::load(cfg_.index_path));
  const std::filesystem::path base = cfg_.index_path.parent_path();
  images_ = [index, base](std::uint64_t id) {
    const ImageInfo* info = index->image_info(id);
    if (info == nullptr || info->path.empty()) {
      throw IoError(fmt::format("no stored path for gallery image {}", id));
    }
    return read_image(resolve(base, info->path));
  };
  index_ = std::move(index);
}

Pipeline::Pipeline(PipelineConfig cfg, std::shared_ptr<const ForestIndex> index, ImageSource images)
    : cfg_(std::move(cfg)), index_(std::move(index)), images_(std::move(images)) {
  cfg_.validate();
  if (!index_) throw ConfigError("pipeline needs an index");
}

ProbeOutcome Pipeline::run_probe(const Image& probe_in, const std::string& probe_id) const {
  ProbeOutcome out;
  ProbeReport& rep = out.report;
  rep.probe_id = probe_id;
  const std::uint64_t probe_seed = substream_seed(cfg_.seed, "probe", fnv1a(probe_id));

  // The probe carries a reserved id so its descriptors never alias a gallery id.
  std::vector<Descriptor> desc;
  try {
    desc = detect_and_describe(probe_in, ~std::uint64_t{0}, cfg_.features);
  } catch (const FeatureError& e) {
    rep.status = ProbeStatus::Degenerate;
    rep.message = e.what();
    return out;
  }
  if (desc.size() < kDegenerateKeypointCount) {
    rep.status = ProbeStatus::Degenerate;
    rep.message = fmt::format("only {} keypoints", desc.size());
    return out;
  }

  const QueryResult found = index_->query_images(desc, cfg_.retrieved, cfg_.checks);
  rep.retrieved = found.ranked.size();

  std::vector<RankedCandidate> registered;
  for (const ImageVote& vote : found.ranked) {
    const std::vector<Descriptor> cand = index_->image_descriptors(vote.image_id);
    MsacOptions opts = cfg_.msac;
    opts.seed = substream_seed(probe_seed, "msac", vote.image_id);
    opts.frame_diagonal = std::hypot(probe_in.width, probe_in.height);
    try {
      RankedCandidate rc = register_candidate(desc, cand, vote.image_id, opts);
      if (rc.inlier_count >= cfg_.min_inliers) registered.push_back(rc);
    } catch (const RegistrationInfeasible&) {
    } catch (const DegenerateGeometry&) {
    }
  }
  rep.registered = registered.size();

  const int best = select_candidate(registered);
  if (best < 0 || registered[static_cast<std::size_t>(best)].rfn < cfg_.rfn_floor) {
    rep.status = ProbeStatus::NoContext;
    rep.message = best < 0 ? "no candidate registered"
                           : fmt::format("best rfn {:.6g} below floor", registered[static_cast<std::size_t>(best)].rfn);
    if (best >= 0) rep.chosen = registered[static_cast<std::size_t>(best)];
    return out;
  }
  rep.chosen = registered[static_cast<std::size_t>(best)];

  const Image probe = as_rgb(probe_in);
  const Image candidate = as_rgb(images_(rep.chosen->image_id));
  const CandidateImage ci{*rep.chosen, &candidate};
  const Selection sel = select_and_warp(probe, std::span(&ci, 1));

  ComparatorConfig cc = cfg_.comparator;
  cc.seed = substream_seed(probe_seed, "compare");
  std::vector<std::string> problems;
  for (Method m : cfg_.methods) {
    try {
      HeatMap map = compare(m, probe, sel.context, cc);
      if (cfg_.write_heatmaps) {
        const std::string stem = fmt::format("heatmaps/{}_{}", probe_id, method_name(m));
        std::filesystem::create_directories(cfg_.output_dir / "heatmaps");
        write_heatmap_sidecar(cfg_.output_dir / (stem + ".thm"), map);
        write_heatmap_png(cfg_.output_dir / (stem + ".png"), map);
        rep.heatmaps[m] = stem + ".thm";
      }
      out.maps.emplace(m, std::move(map));
    } catch (const ComparatorError& e) {
      problems.push_back(fmt::format("{}: {}", method_name(m), e.what()));
    }
  }
  if (out.maps.empty()) {
    rep.status = ProbeStatus::Failed;
  } else {
    rep.status = ProbeStatus::Ok;
  }
  for (const auto& p : problems) rep.message += (rep.message.empty() ? "" : "; ") + p;
  return out;
}

bool BatchSummary::all_failed() const {
  const auto it = status_counts.find(ProbeStatus::Failed);
  return !reports.empty() && it != status_counts.end() && it->second == reports.size();
}

std::vector<SpliceRecord> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot read manifest " + manifest.string());
  std::vector<SpliceRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    records.push_back(splice_record_from_json(line));
  }
  return records;
}

BatchSummary run_batch(const std::filesystem::path& manifest, const Pipeline& pipeline) {
  return run_batch(read_manifest(manifest), manifest.parent_path(), pipeline);
}

BatchSummary run_batch(const std::vector<SpliceRecord>& records, const std::filesystem::path& base_dir,
                       const Pipeline& pipeline) {
  const PipelineConfig& cfg = pipeline.config();
  BatchSummary summary;
  summary.reports.resize(records.size());
  std::map<Method, RocAccumulator> pooled;
  std::map<Method, std::size_t> contributing;
  std::mutex pool_mutex;

  if (records.empty()) spdlog::warn("manifest is empty; nothing to run");

  parallel_for(records.size(), [&](std::size_t i) {
    const SpliceRecord& rec = records[i];
    const std::string probe_id = std::filesystem::path(rec.probe_path).stem().string();
    ProbeOutcome outcome;
    try {
      const Image probe = read_image(resolve(base_dir, rec.probe_path));
      outcome = pipeline.run_probe(probe, probe_id);
      if (!rec.mask_path.empty() && !outcome.maps.empty()) {
        const Mask mask = read_mask(resolve(base_dir, rec.mask_path));
        std::map<Method, RocAccumulator> local;
        for (const auto& [m, map] : outcome.maps) local[m].add(map, mask);
        std::lock_guard lock(pool_mutex);
        for (auto& [m, acc] : local) {
          pooled[m].merge(acc);
          ++contributing[m];
        }
      }
    } catch (const Error& e) {
      outcome.report.probe_id = probe_id;
      outcome.report.status = ProbeStatus::Failed;
      outcome.report.message = e.what();
      outcome.maps.clear();
    }
    outcome.report.probe_path = rec.probe_path;
    if (!rec.mask_path.empty()) {
      outcome.report.mask_path =
          std::filesystem::absolute(resolve(base_dir, rec.mask_path)).lexically_normal().string();
    }
    spdlog::debug("probe {}: {}", probe_id, status_name(outcome.report.status));
    summary.reports[i] = std::move(outcome.report);
  }, cfg.workers);

  for (const ProbeReport& r : summary.reports) {
    ++summary.status_counts[r.status];
    if (r.status == ProbeStatus::Failed) spdlog::warn("probe {} failed: {}", r.probe_id, r.message);
  }

  std::filesystem::create_directories(cfg.output_dir);
  for (Method m : cfg.methods) {
    MethodSummary ms;
    ms.method = m;
    ms.probes = contributing[m];
    const RocAccumulator& acc = pooled[m];
    ms.positives = acc.positives();
    ms.negatives = acc.negatives();
    if (ms.positives > 0 && ms.negatives > 0) {
      const RocCurve curve = acc.finish();
      ms.auc = curve.auc;
      write_roc_csv(cfg.output_dir / fmt::format("roc_{}.csv", method_name(m)), curve);
    }
    summary.methods.push_back(ms);
  }

  std::ofstream reports(cfg.output_dir / "reports.jsonl");
  if (!reports) throw IoError("cannot write reports in " + cfg.output_dir.string());
  for (const ProbeReport& r : summary.reports) reports << report_to_json(r) << '\n';
  std::ofstream csv(cfg.output_dir / "summary.csv");
  if (!csv) throw IoError("cannot write summary in " + cfg.output_dir.string());
  csv << summary_csv(summary);
  return summary;
}

std::string summary_csv(const BatchSummary& summary) {
  const auto count = [&](ProbeStatus s) {
    const auto it = summary.status_counts.find(s);
    return it == summary.status_counts.end() ? std::size_t{0} : it->second;
  };
  std::ostringstream os;
  os << "method,probes,ok,no_context,degenerate,failed,positives,negatives,auc\n";
  for (const MethodSummary& m : summary.methods) {
    os << fmt::format("{},{},{},{},{},{},{},{},{}\n", method_name(m.method), m.probes,
                      count(ProbeStatus::Ok), count(ProbeStatus::NoContext),
                      count(ProbeStatus::Degenerate), count(ProbeStatus::Failed), m.positives,
                      m.negatives, m.auc ? fmt::format("{:.10f}", *m.auc) : std::string("nan"));
  }
  return os.str();
}

ForestIndex build_gallery_index(const std::filesystem::path& gallery_manifest,
                                const std::filesystem::path& index_dir, const ForestOptions& forest,
                                const FeatureOptions& features) {
  std::ifstream in(gallery_manifest);
  if (!in) throw IoError("cannot read gallery manifest " + gallery_manifest.string());
  std::vector<ImageInfo> infos;
  std::vector<std::filesystem::path> paths;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ImageInfo info;
      info.image_id = j.at("image_id").get<std::uint64_t>();
      paths.push_back(resolve(gallery_manifest.parent_path(), j.at("path").get<std::string>()));
      infos.push_back(info);
    } catch (const json::exception& e) {
      throw FormatError(std::string("bad gallery line: ") + e.what());
    }
  }
  std::vector<std::vector<Descriptor>> per_image(infos.size());
  parallel_for(infos.size(), [&](std::size_t i) {
    per_image[i] = detect_and_describe(read_image(paths[i]), infos[i].image_id, features);
  });
  std::vector<Descriptor> all;
  const auto base = std::filesystem::absolute(index_dir).lexically_normal();
  for (std::size_t i = 0; i < infos.size(); ++i) {
    infos[i].descriptor_count = per_image[i].size();
    const auto abs = std::filesystem::absolute(paths[i]).lexically_normal();
    const auto rel = abs.lexically_relative(base);
    infos[i].path = rel.empty() ? abs.string() : rel.string();
    if (per_image[i].size() < kDegenerateKeypointCount) {
      spdlog::warn("gallery image {} yields only {} keypoints", infos[i].image_id, per_image[i].size());
    }
    all.insert(all.end(), per_image[i].begin(), per_image[i].end());
  }
  return ForestIndex::build(std::move(all), forest, infos);
}

}  // namespace ctxf

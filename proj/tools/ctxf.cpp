#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ctxf/comparators.hpp"
#include "ctxf/config.hpp"
#include "ctxf/error.hpp"
#include "ctxf/evaluation.hpp"
#include "ctxf/features.hpp"
#include "ctxf/forest_index.hpp"
#include "ctxf/image_io.hpp"
#include "ctxf/pipeline.hpp"
#include "ctxf/registration.hpp"
#include "ctxf/synth.hpp"

namespace fs = std::filesystem;
using namespace ctxf;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config;
  std::string log_level = "info";
};

PipelineConfig load_config(const Globals& g) {
  PipelineConfig cfg;
  if (!g.config.empty()) cfg = apply_config(load_toml(g.config), cfg);
  if (g.seed_set) cfg.seed = g.seed;
  return cfg;
}

void write_heatmap(const fs::path& out, const HeatMap& map) {
  if (out.extension() == ".png") {
    write_heatmap_png(out, map);
  } else {
    write_heatmap_sidecar(out, map);
  }
}

int cmd_synth(const Globals& g, const fs::path& out, std::size_t count, std::size_t distractors, int size,
              int distractor_size) {
  SceneOptions host_opts;
  host_opts.width = host_opts.height = size;
  SceneOptions other_opts;
  other_opts.width = other_opts.height = distractor_size;
  const std::uint64_t seed = load_config(g).seed;
  auto hosts = std::make_shared<ProceduralCorpus>(substream_seed(seed, "hosts"), count, host_opts);
  const ProceduralCorpus donors(substream_seed(seed, "donors"), std::max<std::size_t>(count, 1), other_opts);
  auto pool = std::make_shared<ProceduralCorpus>(substream_seed(seed, "distractors"), distractors, other_opts);
  const SyntheticDataset data = synthesize_splices(hosts, donors, pool, count, distractors, seed);
  write_dataset(out, data);
  spdlog::info("wrote {} probes and {} gallery images to {}", data.splices.size(), data.gallery->size(),
               out.string());
  return 0;
}

int cmd_index_build(const Globals& g, const fs::path& gallery, const fs::path& out, int trees, int leaf) {
  const PipelineConfig cfg = load_config(g);
  ForestOptions fo;
  fo.trees = trees;
  fo.leaf_size = leaf;
  fo.seed = substream_seed(cfg.seed, "forest");
  const fs::path dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  if (!dir.empty()) fs::create_directories(dir);
  const ForestIndex index = build_gallery_index(gallery, dir, fo, cfg.features);
  index.save(out);
  spdlog::info("indexed {} descriptors from {} images into {}", index.record_count(), index.images().size(),
               out.string());
  return 0;
}

int cmd_index_query(const Globals& g, const fs::path& image, const fs::path& index_path, std::size_t top) {
  const PipelineConfig cfg = load_config(g);
  const ForestIndex index = ForestIndex::load(index_path);
  const auto desc = detect_and_describe(read_image(image), ~std::uint64_t{0}, cfg.features);
  const QueryResult r = index.query_images(desc, top, cfg.checks);
  for (std::size_t i = 0; i < r.ranked.size(); ++i) {
    const ImageVote& v = r.ranked[i];
    const ImageInfo* info = index.image_info(v.image_id);
    nlohmann::json j{{"rank", i + 1}, {"image_id", v.image_id}, {"votes", v.votes},
                     {"distance_sum", v.distance_sum}, {"path", info ? info->path : ""}};
    std::cout << j.dump() << '\n';
  }
  return 0;
}

int cmd_compare(const Globals& g, const fs::path& probe_path, const fs::path& cand_path,
                const std::vector<std::string>& methods, const fs::path& out, bool do_register) {
  const PipelineConfig cfg = load_config(g);
  const Image probe = read_image(probe_path);
  Image candidate = read_image(cand_path);
  if (do_register) {
    const auto pd = detect_and_describe(probe, 0, cfg.features);
    const auto cd = detect_and_describe(candidate, 1, cfg.features);
    MsacOptions opts = cfg.msac;
    opts.seed = substream_seed(cfg.seed, "msac");
    const RankedCandidate rc = register_candidate(pd, cd, 1, opts);
    spdlog::info("registered candidate: rfn {:.6g}, {} inliers", rc.rfn, rc.inlier_count);
    const CandidateImage ci{rc, &candidate};
    candidate = select_and_warp(probe, std::span(&ci, 1)).context;
  }
  ComparatorConfig cc = cfg.comparator;
  cc.seed = substream_seed(cfg.seed, "compare");
  for (const std::string& name : methods) {
    const Method m = method_from_name(name);
    const HeatMap map = compare(m, probe, candidate, cc);
    fs::path target = out;
    if (methods.size() > 1) {
      target = out.parent_path() / fmt::format("{}_{}{}", out.stem().string(), name, out.extension().string());
    }
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    write_heatmap(target, map);
    spdlog::info("{}: {} valid pixels -> {}", name, map.valid_count(), target.string());
  }
  return 0;
}

int cmd_run(const Globals& g, const fs::path& manifest, const std::string& index, const std::string& out,
            const std::vector<std::string>& methods, int retrieved) {
  PipelineConfig cfg = load_config(g);
  if (!index.empty()) cfg.index_path = index;
  if (!out.empty()) cfg.output_dir = out;
  if (retrieved > 0) cfg.retrieved = static_cast<std::size_t>(retrieved);
  if (!methods.empty()) {
    cfg.methods.clear();
    for (const auto& name : methods) cfg.methods.push_back(method_from_name(name));
  }
  const Pipeline pipeline(cfg);
  const BatchSummary summary = run_batch(manifest, pipeline);
  std::cout << summary_csv(summary);
  if (summary.all_failed()) {
    spdlog::error("every probe failed");
    return 1;
  }
  return 0;
}

int cmd_eval_roc(const fs::path& reports, const std::string& out_dir) {
  std::ifstream in(reports);
  if (!in) throw IoError("cannot read " + reports.string());
  const fs::path base = reports.parent_path();
  const fs::path out = out_dir.empty() ? base : fs::path(out_dir);
  std::map<std::string, RocAccumulator> pooled;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.value("status", "") != "ok" || j.value("mask", "").empty()) continue;
    const Mask mask = read_mask(j.at("mask").get<std::string>());
    for (const auto& [method, path] : j.at("heatmaps").items()) {
      pooled[method].add(read_heatmap_sidecar(base / path.get<std::string>()), mask);
    }
  }
  if (pooled.empty()) throw EvaluationError("no scored probes in " + reports.string());
  fs::create_directories(out);
  std::cout << "method,auc\n";
  for (const auto& [method, acc] : pooled) {
    const RocCurve curve = acc.finish();
    write_roc_csv(out / fmt::format("roc_{}.csv", method), curve);
    std::cout << fmt::format("{},{:.10f}\n", method, curve.auc);
  }
  return 0;
}

int cmd_perturb(const Globals& g, const std::string& kind, const fs::path& in, const fs::path& out,
                double delta, double peak_lo, double peak_hi, double max_deg) {
  const std::uint64_t seed = load_config(g).seed;
  const Image img = read_image(in);
  Image result;
  if (kind == "hsv") {
    result = perturb_hsv(img, delta, seed);
  } else if (kind == "poisson") {
    result = perturb_poisson(img, peak_lo, peak_hi, seed);
  } else {
    result = perturb_rotate(img, max_deg, seed);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_image(out, result);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual splice localization: search, register, compare, evaluate"};
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Global seed")->capture_default_str();
  app.add_option("--config", g.config, "TOML config file")->check(CLI::ExistingFile);
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error")->capture_default_str();

  fs::path synth_out = "dataset";
  std::size_t synth_count = 200, synth_distractors = 1000;
  int synth_size = 256, synth_dsize = 160;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic splice dataset");
  synth->add_option("--out", synth_out, "Output directory")->capture_default_str();
  synth->add_option("--count", synth_count, "Number of probes")->capture_default_str();
  synth->add_option("--distractors", synth_distractors, "Unrelated gallery images")->capture_default_str();
  synth->add_option("--size", synth_size, "Host/probe edge length")->capture_default_str();
  synth->add_option("--distractor-size", synth_dsize, "Donor/distractor edge length")->capture_default_str();

  auto* index = app.add_subcommand("index", "Build or query the gallery index");
  index->require_subcommand(1);
  fs::path gallery, index_out = "index.kdf", index_path = "index.kdf", query_image;
  int trees = 8, leaf = 16;
  std::size_t top = 25;
  auto* build = index->add_subcommand("build", "Index a gallery manifest (JSON lines: image_id, path)");
  build->add_option("gallery", gallery, "Gallery manifest")->required()->check(CLI::ExistingFile);
  build->add_option("--out", index_out, "Index file")->capture_default_str();
  build->add_option("--trees", trees, "Number of trees")->capture_default_str();
  build->add_option("--leaf", leaf, "Leaf size")->capture_default_str();
  auto* query = index->add_subcommand("query", "Rank gallery images for one image");
  query->add_option("image", query_image, "Query image")->required()->check(CLI::ExistingFile);
  query->add_option("--index", index_path, "Index file")->capture_default_str();
  query->add_option("--top", top, "Results to print")->capture_default_str();

  fs::path cmp_probe, cmp_cand, cmp_out = "heatmap.thm";
  std::vector<std::string> cmp_methods{"irpsnr"};
  bool cmp_register = false;
  auto* cmp = app.add_subcommand("compare", "Heat map of a probe against one candidate");
  cmp->add_option("probe", cmp_probe)->required()->check(CLI::ExistingFile);
  cmp->add_option("candidate", cmp_cand)->required()->check(CLI::ExistingFile);
  cmp->add_option("--method", cmp_methods, "irpsnr, prnu, ssim, hsvks, patchmatch")->capture_default_str();
  cmp->add_option("--out", cmp_out, "Output (.thm sidecar or 16-bit .png)")->capture_default_str();
  cmp->add_flag("--register", cmp_register, "Register the candidate onto the probe first");

  fs::path run_manifest;
  std::string run_index, run_out;
  std::vector<std::string> run_methods;
  int run_n = 0;
  auto* run = app.add_subcommand("run", "Full pipeline over a probe manifest");
  run->add_option("manifest", run_manifest)->required()->check(CLI::ExistingFile);
  run->add_option("--index", run_index, "Index file");
  run->add_option("--out", run_out, "Output directory");
  run->add_option("--method", run_methods, "Comparators to run");
  run->add_option("--retrieved", run_n, "Candidates retrieved per probe (N)");

  auto* eval = app.add_subcommand("eval", "Evaluate pipeline output");
  eval->require_subcommand(1);
  fs::path roc_reports;
  std::string roc_out;
  auto* roc_cmd = eval->add_subcommand("roc", "Pooled pixel ROC per comparator from reports.jsonl");
  roc_cmd->add_option("reports", roc_reports)->required()->check(CLI::ExistingFile);
  roc_cmd->add_option("--out", roc_out, "Directory for roc_<method>.csv");

  std::string kind;
  fs::path pert_in, pert_out;
  double delta = 0.2, peak_lo = 50, peak_hi = 500, max_deg = 15;
  auto* pert = app.add_subcommand("perturb", "Apply one perturbation family to an image");
  pert->add_option("kind", kind)->required()->check(CLI::IsMember({"hsv", "poisson", "rotate"}));
  pert->add_option("input", pert_in)->required()->check(CLI::ExistingFile);
  pert->add_option("output", pert_out)->required();
  pert->add_option("--delta", delta, "HSV fluctuation bound")->capture_default_str();
  pert->add_option("--peak-lo", peak_lo)->capture_default_str();
  pert->add_option("--peak-hi", peak_hi)->capture_default_str();
  pert->add_option("--max-deg", max_deg, "Rotation bound in degrees")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  g.seed_set = seed_opt->count() > 0;
  spdlog::set_default_logger(spdlog::stderr_color_mt("ctxf"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    if (*synth) return cmd_synth(g, synth_out, synth_count, synth_distractors, synth_size, synth_dsize);
    if (*build) return cmd_index_build(g, gallery, index_out, trees, leaf);
    if (*query) return cmd_index_query(g, query_image, index_path, top);
    if (*cmp) return cmd_compare(g, cmp_probe, cmp_cand, cmp_methods, cmp_out, cmp_register);
    if (*run) return cmd_run(g, run_manifest, run_index, run_out, run_methods, run_n);
    if (*roc_cmd) return cmd_eval_roc(roc_reports, roc_out);
    if (*pert) return cmd_perturb(g, kind, pert_in, pert_out, delta, peak_lo, peak_hi, max_deg);
  } catch (const ctxf::Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
    return 3;
  }
  return 0;
}

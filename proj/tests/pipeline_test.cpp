#include <fstream>
#include <memory>
#include <sstream>

#include <gtest/gtest.h>

#include "ctxf/config.hpp"
#include "ctxf/error.hpp"
#include "ctxf/image_io.hpp"
#include "ctxf/imaging.hpp"
#include "ctxf/pipeline.hpp"
#include "ctxf/synth.hpp"
#include "test_support.hpp"

using namespace ctxf;

// ---------------------------------------------------------------- toml

TEST(Toml, ParsesSubset) {
  const auto doc = parse_toml(R"(# comment
title = "x" # trailing
[pipeline]
retrieved = 50
rfn_floor = 2e-3
comparators = ["irpsnr",
  'ssim',  # split over lines
]
[comparators]
sigma_g = 4.5
pm_identity_prior = false
big = 1_000
[a.b]
"quoted key" = -3
)");
  EXPECT_EQ(doc["title"], "x");
  EXPECT_EQ(doc["pipeline"]["retrieved"], 50);
  EXPECT_DOUBLE_EQ(doc["pipeline"]["rfn_floor"].get<double>(), 2e-3);
  EXPECT_EQ(doc["pipeline"]["comparators"].size(), 2u);
  EXPECT_EQ(doc["comparators"]["pm_identity_prior"], false);
  EXPECT_EQ(doc["comparators"]["big"], 1000);
  EXPECT_EQ(doc["a"]["b"]["quoted key"], -3);
}

TEST(Toml, ErrorsCarryLineNumbers) {
  try {
    parse_toml("a = 1\nb = \n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_toml("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(parse_toml("s = \"open\n"), ConfigError);
  EXPECT_THROW(parse_toml("[[arr]]\n"), ConfigError);
}

TEST(PipelineConfig, AppliesAndValidates) {
  const auto doc = parse_toml(R"(
[pipeline]
retrieved = 10
comparators = ["prnu", "patchmatch"]
seed = 9
[comparators]
pm_iters = 5
[registration]
tau = 2.5
)");
  const PipelineConfig cfg = apply_config(doc);
  EXPECT_EQ(cfg.retrieved, 10u);
  EXPECT_EQ(cfg.methods, (std::vector<Method>{Method::Prnu, Method::PatchMatch}));
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.comparator.pm_iters, 5);
  EXPECT_EQ(cfg.msac.tau, 2.5);
  EXPECT_NO_THROW(cfg.validate());

  EXPECT_THROW(apply_config(parse_toml("[pipeline]\nbogus = 1\n")), ConfigError);
  EXPECT_THROW(apply_config(parse_toml("[nope]\n")), ConfigError);
  EXPECT_THROW(apply_config(parse_toml("[pipeline]\nretrieved = \"ten\"\n")), ConfigError);
  EXPECT_THROW(apply_config(parse_toml("[pipeline]\ncomparators = [\"sift\"]\n")), ConfigError);

  PipelineConfig bad;
  bad.rfn_floor = 0.34;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.rfn_floor = 1e-3;
  bad.retrieved = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

// ---------------------------------------------------------------- pipeline

namespace {

struct Fixture {
  SyntheticDataset data;
  std::shared_ptr<const ForestIndex> index;
};

// Splices over 192px hosts; hosts [0, count) are indexed only when
// `index_hosts` is set, distractors always.
Fixture make_fixture(std::size_t count, std::size_t distractors, bool index_hosts, std::uint64_t seed) {
  SceneOptions host_opts;
  host_opts.width = host_opts.height = 192;
  SceneOptions other_opts;
  other_opts.width = other_opts.height = 160;
  auto hosts = std::make_shared<ProceduralCorpus>(seed, count, host_opts);
  const ProceduralCorpus donors(seed + 1, 20, other_opts);
  auto pool = std::make_shared<ProceduralCorpus>(seed + 2, distractors, other_opts);
  Fixture f;
  f.data = synthesize_splices(hosts, donors, pool, count, distractors, seed);
  std::vector<Descriptor> all;
  for (std::size_t i = 0; i < f.data.gallery->size(); ++i) {
    const GalleryEntry& e = f.data.gallery->entries()[i];
    if (e.is_host && !index_hosts) continue;
    auto d = detect_and_describe(f.data.gallery->image(i), e.image_id);
    all.insert(all.end(), d.begin(), d.end());
  }
  f.index = std::make_shared<ForestIndex>(ForestIndex::build(std::move(all)));
  return f;
}

Pipeline make_pipeline(const Fixture& f, PipelineConfig cfg) {
  auto gallery = f.data.gallery;
  return Pipeline(std::move(cfg), f.index, [gallery](std::uint64_t id) { return gallery->image_by_id(id); });
}

}  // namespace

TEST(Pipeline, GalleryImageAsProbeGivesBaselineMap) {
  const Fixture f = make_fixture(3, 10, true, 31);
  PipelineConfig cfg;
  cfg.write_heatmaps = false;
  const Pipeline p = make_pipeline(f, cfg);
  const ProbeOutcome out = p.run_probe(f.data.gallery->image_by_id(1), "host1");
  ASSERT_EQ(out.report.status, ProbeStatus::Ok) << out.report.message;
  EXPECT_EQ(out.report.chosen->image_id, 1u);
  const HeatMap& h = out.maps.at(Method::Irpsnr);
  for (std::size_t i = 0; i < h.pixel_count(); ++i) {
    if (h.valid[i]) ASSERT_EQ(h.scores[i], 0.5);
  }
}

TEST(Pipeline, NoRelativesMeansNoContextAndNoHeatMap) {
  const Fixture f = make_fixture(4, 30, false, 32);
  PipelineConfig cfg;
  cfg.output_dir = ctxf::testing::scratch_dir("no_context");
  const Pipeline p = make_pipeline(f, cfg);
  for (const SpliceSample& s : f.data.splices) {
    const ProbeOutcome out = p.run_probe(s.probe, "p" + std::to_string(s.record.host_id));
    EXPECT_EQ(out.report.status, ProbeStatus::NoContext) << out.report.message;
    EXPECT_TRUE(out.maps.empty());
    EXPECT_TRUE(out.report.heatmaps.empty());
  }
  EXPECT_FALSE(std::filesystem::exists(cfg.output_dir / "heatmaps"));
}

TEST(Pipeline, SpliceWithHostLocalizes) {
  const Fixture f = make_fixture(3, 10, true, 33);
  PipelineConfig cfg;
  cfg.output_dir = ctxf::testing::scratch_dir("localize");
  const Pipeline p = make_pipeline(f, cfg);
  for (const SpliceSample& s : f.data.splices) {
    const ProbeOutcome out = p.run_probe(s.probe, "probe");
    ASSERT_EQ(out.report.status, ProbeStatus::Ok);
    EXPECT_EQ(out.report.chosen->image_id, s.record.host_id);
    EXPECT_TRUE(std::filesystem::exists(cfg.output_dir / out.report.heatmaps.at(Method::Irpsnr)));
    const HeatMap& h = out.maps.at(Method::Irpsnr);
    EXPECT_GE(roc(std::span(&h, 1), std::span(&s.mask, 1)).auc, 0.9);
  }
}

TEST(Pipeline, TinyProbeIsDegenerate) {
  const Fixture f = make_fixture(1, 5, true, 34);
  PipelineConfig cfg;
  cfg.write_heatmaps = false;
  const Pipeline p = make_pipeline(f, cfg);
  EXPECT_EQ(p.run_probe(Image(40, 40, ColorSpace::RGB, 0.5), "tiny").report.status, ProbeStatus::Degenerate);
  EXPECT_EQ(p.run_probe(Image(128, 128, ColorSpace::RGB, 0.5), "flat").report.status, ProbeStatus::Degenerate);
}

TEST(Pipeline, MissingIndexIsConfigError) {
  PipelineConfig cfg;
  cfg.index_path = "/nonexistent/index.kdf";
  EXPECT_THROW(Pipeline{cfg}, ConfigError);
}

TEST(Pipeline, ReportJsonHasNineTransformEntries) {
  ProbeReport r;
  r.probe_id = "x";
  r.status = ProbeStatus::Ok;
  r.chosen = RankedCandidate{4, AffineTransform::translation(1, 2), 0.3, 10};
  const auto j = nlohmann::json::parse(report_to_json(r));
  EXPECT_EQ(j["transform"].size(), 9u);
  EXPECT_EQ(j["transform"][2], 1.0);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["candidate_id"], 4);
}

TEST(Batch, EmptyManifestIsEmptySummary) {
  const Fixture f = make_fixture(1, 5, true, 35);
  PipelineConfig cfg;
  cfg.output_dir = ctxf::testing::scratch_dir("empty_batch");
  const Pipeline p = make_pipeline(f, cfg);
  const BatchSummary s = run_batch(std::vector<SpliceRecord>{}, cfg.output_dir, p);
  EXPECT_TRUE(s.reports.empty());
  EXPECT_FALSE(s.all_failed());
  ASSERT_EQ(s.methods.size(), 1u);
  EXPECT_FALSE(s.methods[0].auc.has_value());
}

TEST(Batch, FailuresRecordedAndDeterministic) {
  const Fixture f = make_fixture(4, 10, true, 36);
  const auto dir = ctxf::testing::scratch_dir("batch");
  std::vector<SpliceRecord> records;
  for (const SpliceSample& s : f.data.splices) {
    write_image(dir / s.record.probe_path, s.probe);
    write_mask(dir / s.record.mask_path, s.mask);
    records.push_back(s.record);
  }
  SpliceRecord missing;
  missing.probe_path = "probes/missing.png";
  records.push_back(missing);

  PipelineConfig cfg;
  cfg.methods = {Method::Irpsnr, Method::Ssim};
  cfg.seed = 42;
  std::string first;
  for (int run = 0; run < 2; ++run) {
    cfg.output_dir = dir / ("out" + std::to_string(run));
    const Pipeline p = make_pipeline(f, cfg);
    const BatchSummary s = run_batch(records, dir, p);
    EXPECT_EQ(s.reports.back().status, ProbeStatus::Failed);
    EXPECT_EQ(s.status_counts.at(ProbeStatus::Ok), 4u);
    EXPECT_FALSE(s.all_failed());
    ASSERT_EQ(s.methods.size(), 2u);
    EXPECT_GT(*s.methods[0].auc, 0.9);
    std::ifstream in(cfg.output_dir / "summary.csv");
    std::stringstream buf;
    buf << in.rdbuf();
    if (run == 0) first = buf.str();
    else EXPECT_EQ(buf.str(), first);
  }

  const std::vector<SpliceRecord> only_missing{missing};
  cfg.output_dir = dir / "fail";
  EXPECT_TRUE(run_batch(only_missing, dir, make_pipeline(f, cfg)).all_failed());
}

TEST(ContextualPremise, TrueHostBeatsForcedDistractor) {
  const Fixture f = make_fixture(3, 3, true, 37);
  std::map<Method, RocAccumulator> host_pool, distractor_pool;
  for (std::size_t n = 0; n < f.data.splices.size(); ++n) {
    const SpliceSample& s = f.data.splices[n];
    const Image host = f.data.gallery->image_by_id(s.record.host_id);
    // Distractor stretched over the whole probe frame.
    const Image other = f.data.gallery->image_by_id(3 + n);
    const double k = static_cast<double>(s.probe.width - 1) / (other.width - 1);
    const Image forced = warp_affine(other, AffineTransform::scaling(k, k), s.probe.width, s.probe.height);
    for (Method m : all_methods()) {
      host_pool[m].add(compare(m, s.probe, host), s.mask);
      distractor_pool[m].add(compare(m, s.probe, forced), s.mask);
    }
  }
  for (Method m : all_methods()) {
    EXPECT_GT(host_pool[m].finish().auc, distractor_pool[m].finish().auc) << method_name(m);
  }
}

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "segilm/error.hpp"
#include "segilm/harness.hpp"

namespace fs = std::filesystem;
using namespace segilm;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("segilm_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

harness::ExperimentConfig tiny_config() {
  auto cfg = harness::preset("fig3");
  cfg.name = "tiny";
  cfg.instantiations = 3;
  cfg.master_seed = 5;
  cfg.sim.n_pairs = 20;
  cfg.sim.n_everyday = 20;
  cfg.sim.autoencoder_samples = 2;
  cfg.sim.epochs = 2;
  cfg.sim.generations = 3;
  cfg.dataset = {1, 4, 3};
  return cfg;
}

const glyph::Dataset& tiny_dataset() {
  static const glyph::Dataset ds = glyph::generate_dataset(
      glyph::SegmentLayout::standard(), glyph::NoiseParams::level(1), 4, 3);
  return ds;
}

harness::RunResult run_tiny(const harness::ExperimentConfig& cfg, const fs::path& dir,
                            std::size_t parallel, bool charts = false) {
  harness::RunOptions opts;
  opts.out_dir = dir;
  opts.parallel = parallel;
  opts.charts = charts;
  return harness::run_experiment(cfg, tiny_dataset(), opts);
}

}  // namespace

TEST(Config, PresetsExistAndValidate) {
  const auto names = harness::preset_names();
  EXPECT_EQ(names.size(), 6u);
  for (const auto& n : names) {
    const auto cfg = harness::preset(n);
    EXPECT_EQ(cfg.name, n);
    EXPECT_NO_THROW(cfg.validate());
  }
  EXPECT_THROW(harness::preset("fig5"), InvalidArgument);
}

TEST(Config, PresetContents) {
  const auto fig3 = harness::preset("fig3");
  EXPECT_EQ(fig3.sim.arch.signal_width(), 7u);
  EXPECT_EQ(fig3.dataset.noise_level, 1);
  EXPECT_EQ(fig3.instantiations, 10u);
  EXPECT_EQ(fig3.sim.generations, 100u);

  EXPECT_EQ(harness::preset("fig4").sim.generations, 30u);
  EXPECT_TRUE(harness::preset("fig4").loss_curves);
  EXPECT_EQ(harness::preset("fig6a").dataset.noise_level, 2);
  EXPECT_EQ(harness::preset("fig6b").sim.arch.signal_width(), 10u);

  const auto fig6c = harness::preset("fig6c");
  EXPECT_EQ(fig6c.sim.arch.ew_sizes, (std::vector<std::size_t>{20, 18, 15}));
  EXPECT_EQ(fig6c.dataset.noise_level, 3);

  const auto fig7 = harness::preset("fig7");
  EXPECT_EQ(fig7.sim.arch.signal_width(), 12u);
  EXPECT_TRUE(fig7.latents);
  EXPECT_TRUE(fig7.snapshots_enabled());
}

TEST(Config, TextRoundTrip) {
  for (const auto& n : harness::preset_names()) {
    const auto cfg = harness::preset(n);
    const auto text = harness::to_config_text(cfg);
    const auto back = harness::parse_config(text);
    EXPECT_EQ(harness::to_config_text(back), text) << n;
    EXPECT_EQ(harness::config_hash(back), harness::config_hash(cfg)) << n;
  }
}

TEST(Config, ParseSettingsAndComments) {
  const auto cfg = harness::parse_config(
      "preset = fig6b\n# a comment\n  eta = 2.5   # trailing\n\ngenerations=12\n"
      "word_encoder = 10x9x8\nloss = sum\ninit = glorot\nloss_norm = global\n");
  EXPECT_EQ(cfg.sim.train.eta, 2.5);
  EXPECT_EQ(cfg.sim.generations, 12u);
  EXPECT_EQ(cfg.sim.arch.ew_sizes, (std::vector<std::size_t>{10, 9, 8}));
  EXPECT_EQ(cfg.sim.train.normalization, net::LossNormalization::sum);
  EXPECT_EQ(cfg.sim.init, net::InitScheme::glorot_uniform);
  EXPECT_EQ(cfg.dataset.noise_level, 2);
  EXPECT_EQ(cfg.loss_scope, harness::LossNormalizationScope::global);
}

TEST(Config, RejectsBadInput) {
  harness::ExperimentConfig cfg;
  EXPECT_THROW(harness::apply_setting(cfg, "no_such_key", "1"), InvalidArgument);
  EXPECT_THROW(harness::apply_setting(cfg, "eta", "fast"), InvalidArgument);
  EXPECT_THROW(harness::apply_setting(cfg, "generations", "-3"), InvalidArgument);
  EXPECT_THROW(harness::apply_setting(cfg, "loss", "median"), InvalidArgument);
  EXPECT_THROW(harness::parse_config("eta = 1\npreset = fig3\n"), InvalidArgument);
  EXPECT_THROW(harness::parse_config("eta\n"), InvalidArgument);
}

TEST(Config, HashTracksChanges) {
  auto a = harness::preset("fig3");
  auto b = a;
  EXPECT_EQ(harness::config_hash(a), harness::config_hash(b));
  b.sim.train.eta = 14.0;
  EXPECT_NE(harness::config_hash(a), harness::config_hash(b));
}

TEST(Config, InstantiationSeeds) {
  EXPECT_EQ(harness::instantiation_seed(1, 0), derive_seed(1, 0));
  EXPECT_NE(harness::instantiation_seed(1, 0), harness::instantiation_seed(1, 1));
  EXPECT_NE(harness::instantiation_seed(1, 0), harness::instantiation_seed(2, 0));
}

TEST(Dataset, ObtainCachesToDisk) {
  const auto dir = scratch("dataset");
  const harness::DatasetSpec spec{2, 2, 9};
  EXPECT_EQ(spec.file_name(), "noise2_v2_s9.bin");
  const auto first = harness::obtain_dataset(spec, dir);
  ASSERT_TRUE(fs::exists(dir / spec.file_name()));
  const auto stamp = fs::last_write_time(dir / spec.file_name());
  const auto second = harness::obtain_dataset(spec, dir);
  EXPECT_EQ(first, second);
  EXPECT_EQ(fs::last_write_time(dir / spec.file_name()), stamp);
  EXPECT_EQ(first.params, glyph::NoiseParams::level(2));

  auto shifted = spec;
  shifted.translation_units = glyph::TranslationUnits::base;
  EXPECT_EQ(shifted.file_name(), "noise2_v2_s9_tbase.bin");
  const auto third = harness::obtain_dataset(shifted, dir);
  EXPECT_EQ(third.params.translation_units, glyph::TranslationUnits::base);
  EXPECT_NE(third.variants, first.variants);
  EXPECT_EQ(third.base, first.base);
}

TEST(Csv, FormatDoubleRoundTrips) {
  RandomStream rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(20)) - 10.0);
    EXPECT_EQ(std::stod(harness::format_double(v)), v);
  }
  EXPECT_EQ(harness::format_double(0.5), "0.5");
  EXPECT_EQ(harness::format_double(std::nan("")), "nan");
}

TEST(Csv, ReadBack) {
  const auto dir = scratch("csv");
  std::ofstream(dir / "t.csv") << "a,b\n1,2.5\n3,nan\n";
  const auto t = harness::read_csv(dir / "t.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(t.column("b"), 1u);
  EXPECT_THROW((void)t.column("z"), FormatError);
  const auto b = t.numbers("b");
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0], 2.5);
  EXPECT_TRUE(std::isnan(b[1]));
  EXPECT_THROW(harness::read_csv(dir / "missing.csv"), IoError);
}

TEST(Csv, GenerationColumns) {
  const auto cols = harness::generation_columns(2);
  EXPECT_EQ(cols.front(), "generation");
  EXPECT_NE(std::find(cols.begin(), cols.end(), "c_raw"), cols.end());
  EXPECT_NE(std::find(cols.begin(), cols.end(), "inner_loss_2"), cols.end());
  EXPECT_EQ(std::find(cols.begin(), cols.end(), "inner_loss_3"), cols.end());
}

TEST(Run, WritesExpectedFiles) {
  const auto dir = scratch("files");
  const auto result = run_tiny(tiny_config(), dir, 2, true);
  EXPECT_EQ(result.instantiations.size(), 3u);
  EXPECT_EQ(result.failures(), 0u);
  for (const char* f : {"manifest.txt", "config.txt", "inst_00.csv", "inst_01.csv",
                        "inst_02.csv", "aggregate.csv", "xcs.svg"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_FALSE(fs::exists(dir / "losses.csv"));
  const auto t = harness::read_csv(dir / "inst_01.csv");
  EXPECT_EQ(t.header, harness::generation_columns(2));
  EXPECT_EQ(t.rows.size(), 3u);
  const auto agg = harness::read_csv(dir / "aggregate.csv");
  EXPECT_EQ(agg.rows.size(), 3u);
  EXPECT_EQ(agg.numbers("n"), (std::vector<double>{3, 3, 3}));

  const auto manifest = slurp(dir / "manifest.txt");
  EXPECT_NE(manifest.find("schema_version = 1"), std::string::npos);
  EXPECT_NE(manifest.find("status_02 = ok"), std::string::npos);
  EXPECT_EQ(slurp(dir / "xcs.svg").rfind("<svg", 0), 0u);

  // The saved config reproduces the run.
  const auto saved = harness::load_config(dir / "config.txt");
  EXPECT_EQ(harness::config_hash(saved), harness::config_hash(tiny_config()));
}

TEST(Run, CsvsIndependentOfParallelism) {
  const auto a = scratch("par1"), b = scratch("par3");
  run_tiny(tiny_config(), a, 1);
  run_tiny(tiny_config(), b, 3);
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() == ".csv") {
      EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path();
      ++compared;
    }
  }
  EXPECT_EQ(compared, 4u);
  EXPECT_EQ(slurp(a / "manifest.txt"), slurp(b / "manifest.txt"));
}

TEST(Run, InstantiationMatchesStandaloneChain) {
  const auto dir = scratch("standalone");
  const auto cfg = tiny_config();
  const auto result = run_tiny(cfg, dir, 2);
  auto sim = cfg.sim;
  sim.master_seed = harness::instantiation_seed(cfg.master_seed, 2);
  const auto records = ilm::run_chain(sim, tiny_dataset());
  ASSERT_EQ(records.size(), result.instantiations[2].records.size());
  for (std::size_t g = 0; g < records.size(); ++g) {
    EXPECT_EQ(records[g].table, result.instantiations[2].records[g].table);
  }
}

TEST(Run, DatasetMismatchRejected) {
  auto cfg = tiny_config();
  cfg.dataset.noise_level = 2;
  EXPECT_THROW(run_tiny(cfg, scratch("mismatch"), 1), InvalidArgument);
}

TEST(Run, DivergenceIsolatedPerInstantiation) {
  auto poisoned = tiny_dataset();
  for (auto& img : poisoned.variants) {
    img[0] = std::numeric_limits<float>::quiet_NaN();
  }
  const auto dir = scratch("diverge");
  harness::RunOptions opts;
  opts.out_dir = dir;
  opts.charts = false;
  const auto result = harness::run_experiment(tiny_config(), poisoned, opts);
  EXPECT_EQ(result.failures(), 3u);
  for (const auto& inst : result.instantiations) {
    ASSERT_TRUE(inst.error.has_value());
  }
  EXPECT_NE(slurp(dir / "manifest.txt").find("status_00 = diverged"), std::string::npos);
}

TEST(LossCurves, NormalizedByFirstEpoch) {
  auto cfg = tiny_config();
  cfg.loss_curves = true;
  const auto dir = scratch("loss");
  const auto result = run_tiny(cfg, dir, 1, true);
  const auto rows = harness::normalized_loss_curves(result.instantiations);
  ASSERT_EQ(rows.size(), 3u * 2u);
  EXPECT_EQ(rows[0].generation, 1u);
  EXPECT_EQ(rows[0].epoch, 1u);
  EXPECT_DOUBLE_EQ(rows[0].encoder, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].decoder, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].inner, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].outer, 1.0);

  // Hand-computed value for a later row.
  double expected = 0.0;
  for (const auto& inst : result.instantiations) {
    expected += inst.records[2].losses.decoder[1] / inst.records[0].losses.decoder[0];
  }
  EXPECT_NEAR(rows.back().decoder, expected / 3.0, 1e-15);

  double inner_sum = 0.0, norm_sum = 0.0;
  for (const auto& inst : result.instantiations) {
    inner_sum += inst.records[1].losses.inner[0];
    norm_sum += inst.records[0].losses.inner[0];
  }
  const auto global =
      harness::normalized_loss_curves(result.instantiations, harness::LossNormalizationScope::global);
  ASSERT_EQ(global.size(), rows.size());
  EXPECT_DOUBLE_EQ(global[0].outer, 1.0);
  EXPECT_NEAR(global[2].inner, inner_sum / norm_sum, 1e-15);

  ASSERT_TRUE(fs::exists(dir / "losses.csv"));
  EXPECT_TRUE(fs::exists(dir / "losses.svg"));
  EXPECT_EQ(harness::read_csv(dir / "losses.csv").rows.size(), 6u);
}

TEST(Snapshots, RecomputedMetricsMatchCsv) {
  auto cfg = tiny_config();
  cfg.instantiations = 1;
  cfg.snapshot_first = 0;
  cfg.snapshot_last = 3;
  const auto dir = scratch("snapshots");
  run_tiny(cfg, dir, 1);
  const auto snaps = harness::list_snapshots(dir / "inst_00");
  ASSERT_EQ(snaps.size(), 4u);
  EXPECT_EQ(snaps[0].first, 0u);
  EXPECT_EQ(snaps[3].second.filename(), harness::snapshot_name(3));

  const auto rows = harness::recompute_metrics(snaps, tiny_dataset());
  const auto csv = harness::read_csv(dir / "inst_00.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_FALSE(rows[0].s.has_value());
  for (std::size_t g = 1; g <= 3; ++g) {
    const auto& row = csv.rows[g - 1];
    EXPECT_EQ(harness::format_double(rows[g].x), row[csv.column("x")]);
    EXPECT_EQ(harness::format_double(rows[g].c_raw), row[csv.column("c_raw")]);
    EXPECT_EQ(harness::format_double(rows[g].c), row[csv.column("c")]);
    ASSERT_TRUE(rows[g].s.has_value());
    EXPECT_EQ(harness::format_double(*rows[g].s), row[csv.column("s")]);
  }
}

TEST(Snapshots, NameAndEmptyDirectory) {
  EXPECT_EQ(harness::snapshot_name(7), "gen_0007.agent");
  EXPECT_TRUE(harness::list_snapshots(scratch("empty")).empty());
}

TEST(Latents, ShapesAndRange) {
  auto cfg = tiny_config();
  cfg.instantiations = 1;
  cfg.latents = true;
  cfg.snapshot_first = 1;
  cfg.snapshot_last = 2;
  cfg.latent_variants = 3;
  const auto dir = scratch("latents");
  run_tiny(cfg, dir, 1);
  const auto variants = harness::read_csv(dir / "inst_00" / "latents_variants.csv");
  const auto gens = harness::read_csv(dir / "inst_00" / "latents_generations.csv");
  EXPECT_EQ(variants.rows.size(), 3u);
  EXPECT_EQ(gens.rows.size(), 2u);
  EXPECT_EQ(variants.header.size(), 1u + cfg.sim.arch.latent_width());
  for (const auto& row : variants.rows) {
    for (std::size_t k = 1; k < row.size(); ++k) {
      const double v = std::stod(row[k]);
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }

  const auto agent = ilm::initial_tutor(cfg.sim);
  const auto lat = harness::variant_latents(agent, tiny_dataset(), 6, 4);
  ASSERT_EQ(lat.size(), 4u);
  EXPECT_EQ(lat[1], agent.encode_latent(to_vector(tiny_dataset().variant(6, 1))));
  EXPECT_THROW(harness::variant_latents(agent, tiny_dataset(), 6, 5), InvalidArgument);
}

TEST(Charts, PlotRunRegenerates) {
  auto cfg = tiny_config();
  cfg.loss_curves = true;
  const auto dir = scratch("charts");
  run_tiny(cfg, dir, 1, false);
  EXPECT_FALSE(fs::exists(dir / "xcs.svg"));
  harness::plot_run(dir);
  EXPECT_TRUE(fs::exists(dir / "xcs.svg"));
  EXPECT_TRUE(fs::exists(dir / "losses.svg"));
  const auto svg = slurp(dir / "xcs.svg");
  // Three per-run lines and one mean line in each of three panels.
  std::size_t lines = 0;
  for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) {
    ++lines;
  }
  EXPECT_EQ(lines, 12u);
  EXPECT_THROW(harness::plot_run(scratch("nocsv")), IoError);
}

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "segilm/error.hpp"
#include "segilm/harness.hpp"

namespace fs = std::filesystem;
using namespace segilm;

namespace {

struct GenDataArgs {
  int noise = 1;
  std::optional<double> mu, rho, sigma;
  std::string translation = "upsampled";
  std::size_t variants = 100;
  std::uint64_t seed = 7;
  fs::path output;
  fs::path csv;
};

struct RunArgs {
  std::string preset;
  fs::path config;
  std::vector<std::string> settings;
  fs::path dataset;
  fs::path data_dir = "data";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> instantiations;
  std::size_t parallel = 1;
  fs::path output;
  bool no_charts = false;
  bool quiet = false;
};

struct LatentsArgs {
  fs::path snapshot;
  fs::path snapshot_dir;
  fs::path dataset;
  std::size_t glyph = 6;
  std::size_t count = 20;
  std::size_t first = 0;
  std::size_t last = 0;
  fs::path output;
};

struct MetricsArgs {
  std::vector<fs::path> snapshots;
  fs::path snapshot_dir;
  fs::path dataset;
  fs::path compare;
};

int gen_data(const GenDataArgs& a) {
  glyph::NoiseParams params =
      a.noise == 0 ? glyph::NoiseParams{} : glyph::NoiseParams::level(a.noise);
  if (a.mu) params.mu = *a.mu;
  if (a.rho) params.rho = *a.rho;
  if (a.sigma) params.sigma = *a.sigma;
  params.translation_units =
      a.translation == "base" ? glyph::TranslationUnits::base : glyph::TranslationUnits::upsampled;
  params.validate();
  const auto ds =
      glyph::generate_dataset(glyph::SegmentLayout::standard(), params, a.variants, a.seed);
  glyph::save_dataset(ds, a.output);
  if (!a.csv.empty()) {
    glyph::export_dataset_csv(ds, a.csv);
  }
  std::printf("%zu variants, hash %016llx -> %s\n", ds.variant_count(),
              static_cast<unsigned long long>(glyph::dataset_hash(ds)), a.output.c_str());
  return 0;
}

int run(const RunArgs& a) {
  harness::ExperimentConfig cfg;
  if (!a.preset.empty()) {
    cfg = harness::preset(a.preset);
  }
  if (!a.config.empty()) {
    cfg = harness::load_config(a.config, cfg);
  }
  for (const auto& s : a.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("--set expects key=value, got '" + s + "'");
    }
    harness::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (a.seed) cfg.master_seed = *a.seed;
  if (a.instantiations) cfg.instantiations = *a.instantiations;
  cfg.validate();

  glyph::Dataset ds;
  if (!a.dataset.empty()) {
    ds = glyph::load_dataset(a.dataset);
  } else {
    ds = harness::obtain_dataset(cfg.dataset, a.data_dir);
  }

  harness::RunOptions opts;
  opts.out_dir = a.output.empty() ? fs::path("runs") / cfg.name : a.output;
  opts.parallel = a.parallel == 0 ? std::max(1u, std::thread::hardware_concurrency()) : a.parallel;
  opts.charts = !a.no_charts;
  if (!a.quiet) {
    opts.progress = [](std::size_t inst, const ilm::GenerationRecord& r) {
      std::fprintf(stderr, "inst %02zu gen %3zu  x=%.3f c=%.3f s=%.3f  (%.1fs)\n", inst,
                   r.generation, r.x, r.c_reported(), r.s, r.seconds);
    };
  }
  const auto result = harness::run_experiment(cfg, ds, opts);
  for (const auto& inst : result.instantiations) {
    if (inst.error) {
      std::fprintf(stderr, "instantiation %zu diverged: %s\n", inst.index, inst.error->c_str());
    }
  }
  std::printf("wrote %s\n", opts.out_dir.c_str());
  return result.failures() ? exit_code(ErrorCategory::divergence) : 0;
}

int latents(const LatentsArgs& a) {
  const auto ds = glyph::load_dataset(a.dataset);
  std::vector<std::string> labels;
  std::vector<net::Vector> rows;
  if (!a.snapshot.empty()) {
    rows = harness::variant_latents(load_agent(a.snapshot), ds, a.glyph, a.count);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      labels.push_back(std::to_string(k));
    }
  } else {
    const auto base = to_vector(ds.base.at(a.glyph));
    for (const auto& [g, path] : harness::list_snapshots(a.snapshot_dir)) {
      if (g >= a.first && g <= a.last) {
        labels.push_back(std::to_string(g));
        rows.push_back(load_agent(path).encode_latent(base));
      }
    }
    if (rows.empty()) {
      throw IoError("no snapshots in the requested generation range");
    }
  }
  harness::write_latents_csv(a.output, labels, rows);
  std::printf("%zu rows -> %s\n", rows.size(), a.output.c_str());
  return 0;
}

int metrics_cmd(const MetricsArgs& a) {
  const auto ds = glyph::load_dataset(a.dataset);
  std::vector<std::pair<std::size_t, fs::path>> snaps;
  if (!a.snapshot_dir.empty()) {
    snaps = harness::list_snapshots(a.snapshot_dir);
  }
  for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
    snaps.emplace_back(i, a.snapshots[i]);
  }
  const auto rows = harness::recompute_metrics(snaps, ds);
  std::printf("generation,x,c_raw,c,s\n");
  for (const auto& m : rows) {
    std::printf("%zu,%s,%s,%s,%s\n", m.generation, harness::format_double(m.x).c_str(),
                harness::format_double(m.c_raw).c_str(), harness::format_double(m.c).c_str(),
                m.s ? harness::format_double(*m.s).c_str() : "");
  }
  if (a.compare.empty()) {
    return 0;
  }
  const auto table = harness::read_csv(a.compare);
  const auto gens = table.numbers("generation");
  std::size_t mismatches = 0;
  for (const auto& m : rows) {
    for (std::size_t r = 0; r < gens.size(); ++r) {
      if (static_cast<std::size_t>(gens[r]) != m.generation) {
        continue;
      }
      const auto& row = table.rows[r];
      auto differs = [&](const char* col, double v) {
        return row[table.column(col)] != harness::format_double(v);
      };
      if (differs("x", m.x) || differs("c_raw", m.c_raw) || differs("c", m.c) ||
          (m.s && differs("s", *m.s))) {
        std::fprintf(stderr, "generation %zu differs from %s\n", m.generation, a.compare.c_str());
        ++mismatches;
      }
    }
  }
  if (mismatches) {
    throw FormatError(std::to_string(mismatches) + " generation(s) disagree with the run CSV");
  }
  std::fprintf(stderr, "all recomputed metrics match %s\n", a.compare.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised iterated learning on seven-segment glyphs"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a glyph variant dataset");
  gen->add_option("--noise", gd.noise, "Noise level 0-3")->check(CLI::Range(0, 3));
  gen->add_option("--mu", gd.mu, "Override the intensity dip mean");
  gen->add_option("--rho", gd.rho, "Override the rotation std-dev (radians)");
  gen->add_option("--sigma", gd.sigma, "Override the translation std-dev");
  gen->add_option("--translation", gd.translation, "Units of sigma: upsampled or base pixels")
      ->check(CLI::IsMember({"upsampled", "base"}));
  gen->add_option("--variants", gd.variants, "Variants per glyph");
  gen->add_option("--seed", gd.seed, "Dataset seed");
  gen->add_option("-o,--output", gd.output, "Output file")->required();
  gen->add_option("--csv", gd.csv, "Also export as CSV");

  RunArgs ra;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment");
  run_cmd->add_option("--preset", ra.preset, "fig3, fig4, fig6a, fig6b, fig6c or fig7");
  run_cmd->add_option("--config", ra.config, "key = value config file");
  run_cmd->add_option("--set", ra.settings, "Override one setting (key=value)");
  run_cmd->add_option("--dataset", ra.dataset, "Dataset file (default: generated into --data-dir)");
  run_cmd->add_option("--data-dir", ra.data_dir, "Dataset cache directory");
  run_cmd->add_option("--seed", ra.seed, "Master seed");
  run_cmd->add_option("--instantiations", ra.instantiations, "Number of chains");
  run_cmd->add_option("--parallel", ra.parallel, "Concurrent chains (0 = all cores)");
  run_cmd->add_option("-o,--output", ra.output, "Output directory");
  run_cmd->add_flag("--no-charts", ra.no_charts, "Skip SVG charts");
  run_cmd->add_flag("-q,--quiet", ra.quiet, "No per-generation progress");

  LatentsArgs la;
  auto* lat = app.add_subcommand("latents", "Dump continuous latents");
  auto* lat_snap = lat->add_option("--snapshot", la.snapshot, "Agent snapshot (variant dump)");
  auto* lat_dir =
      lat->add_option("--snapshots", la.snapshot_dir, "Snapshot directory (per-generation dump)");
  lat_snap->excludes(lat_dir);
  lat->add_option("--dataset", la.dataset, "Dataset file")->required();
  lat->add_option("--glyph", la.glyph, "Glyph id")->check(CLI::Range(0, 127));
  lat->add_option("--count", la.count, "Variant images");
  lat->add_option("--first", la.first, "First generation");
  lat->add_option("--last", la.last, "Last generation");
  lat->add_option("-o,--output", la.output, "Output CSV")->required();

  MetricsArgs ma;
  auto* met = app.add_subcommand("metrics", "Recompute x, c and s from snapshots");
  met->add_option("--snapshot", ma.snapshots, "Snapshot files in generation order");
  met->add_option("--snapshots", ma.snapshot_dir, "Snapshot directory");
  met->add_option("--dataset", ma.dataset, "Dataset file")->required();
  met->add_option("--compare", ma.compare, "Generations CSV to check against");

  fs::path plot_dir;
  auto* plot = app.add_subcommand("plot", "Regenerate charts of a run directory");
  plot->add_option("run_dir", plot_dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return gen_data(gd);
    if (run_cmd->parsed()) return run(ra);
    if (lat->parsed()) {
      if (la.snapshot.empty() && la.snapshot_dir.empty()) {
        throw InvalidArgument("latents needs --snapshot or --snapshots");
      }
      return latents(la);
    }
    if (met->parsed()) {
      if (ma.snapshots.empty() && ma.snapshot_dir.empty()) {
        throw InvalidArgument("metrics needs --snapshot or --snapshots");
      }
      return metrics_cmd(ma);
    }
    if (plot->parsed()) {
      harness::plot_run(plot_dir);
      std::printf("charts written to %s\n", plot_dir.c_str());
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", std::string(to_string(e.category())).c_str(), e.what());
    return exit_code(e.category());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error[io]: %s\n", e.what());
    return exit_code(ErrorCategory::io);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 1;
  }
  return 0;
}

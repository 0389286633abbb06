#pragma once

// Experiment orchestration: presets and config files, seeded multi-instance
// runs, CSV/manifest output, latent dumps and SVG charts.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "segilm/agent.hpp"
#include "segilm/glyphset.hpp"
#include "segilm/ilm.hpp"

namespace segilm::harness {

/// Bumped whenever a CSV column is added, removed or reordered.
inline constexpr int kCsvSchemaVersion = 1;

struct DatasetSpec {
  int noise_level = 1;  // 0 means no noise
  std::size_t variants = 100;
  std::uint64_t seed = 7;
  glyph::TranslationUnits translation_units = glyph::TranslationUnits::upsampled;

  [[nodiscard]] glyph::NoiseParams params() const;
  /// Canonical file name, e.g. "noise1_v100_s7.bin" ("_tbase" is appended
  /// for base-pixel translation).
  [[nodiscard]] std::string file_name() const;
};

enum class LossNormalizationScope {
  instantiation,  // divide each instantiation's curves by its own first-epoch loss
  global,         // divide the averaged curves by the averaged first-epoch loss
};

struct ExperimentConfig {
  std::string name = "custom";
  ilm::SimConfig sim;  // sim.master_seed is replaced per instantiation
  std::size_t instantiations = 10;
  std::uint64_t master_seed = 1;
  DatasetSpec dataset;
  /// Write normalized per-epoch losses (fig4 style).
  bool loss_curves = false;
  LossNormalizationScope loss_scope = LossNormalizationScope::instantiation;
  /// Save agent snapshots for generations in [first, last]; generation 0 is
  /// the initial tutor. Disabled when first > last.
  std::size_t snapshot_first = 1;
  std::size_t snapshot_last = 0;
  /// Dump continuous latents of `latent_glyph`: `latent_variants` variant
  /// images from the final agent, and the base glyph for every snapshot
  /// generation.
  bool latents = false;
  std::size_t latent_glyph = 6;  // the "1" glyph: segments 1 and 2
  std::size_t latent_variants = 20;

  [[nodiscard]] bool snapshots_enabled() const { return snapshot_first <= snapshot_last; }
  void validate() const;
};

std::vector<std::string> preset_names();
/// Throws InvalidArgument for an unknown name.
ExperimentConfig preset(std::string_view name);

/// Applies one `key = value` setting. Throws InvalidArgument for unknown keys
/// or malformed values.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Reads `key = value` lines on top of `base`; '#' starts a comment. A
/// `preset = name` line, if present, must come first and resets the base.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const ExperimentConfig& base = ExperimentConfig{});
ExperimentConfig parse_config(std::string_view text, const ExperimentConfig& base = ExperimentConfig{});

/// Canonical `key = value` text of every setting; parse_config of it restores
/// the config exactly.
std::string to_config_text(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// Seed of instantiation `index` for a run with `master_seed`.
std::uint64_t instantiation_seed(std::uint64_t master_seed, std::size_t index);

/// Loads `dir / spec.file_name()` or generates and caches it.
glyph::Dataset obtain_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);

struct InstantiationResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::vector<ilm::GenerationRecord> records;
  std::optional<std::string> error;  // set when the chain diverged
};

struct RunOptions {
  std::filesystem::path out_dir;
  std::size_t parallel = 1;
  bool charts = true;
  /// Progress callback (instantiation, generation record); may be called
  /// from worker threads, serialized by the harness.
  std::function<void(std::size_t, const ilm::GenerationRecord&)> progress;
};

struct RunResult {
  std::vector<InstantiationResult> instantiations;
  [[nodiscard]] std::size_t failures() const;
};

/// Runs every instantiation and writes into opts.out_dir:
///   manifest.txt, config.txt, inst_NN.csv, aggregate.csv,
///   losses.csv (loss_curves), inst_NN/gen_GGGG.agent (snapshots),
///   inst_NN/latents_variants.csv and inst_NN/latents_generations.csv
///   (latents), and xcs.svg / losses.svg (charts).
/// A diverged instantiation is reported in its result and the manifest; the
/// others still run.
RunResult run_experiment(const ExperimentConfig& cfg, const glyph::Dataset& ds,
                         const RunOptions& opts);

// ---- CSV ----

/// Column names of a generations file for `epochs` epochs.
std::vector<std::string> generation_columns(std::size_t epochs);
void write_generations_csv(const std::filesystem::path& path,
                           const std::vector<ilm::GenerationRecord>& records, std::size_t epochs);
/// Mean, min and max of x, c and s per generation over the successful
/// instantiations.
void write_aggregate_csv(const std::filesystem::path& path,
                         const std::vector<InstantiationResult>& results);

/// Per-epoch losses normalized by the first-epoch loss of the first pupil
/// (per configuration) and averaged over instantiations; see
/// LossNormalizationScope. One row per (generation, epoch).
struct LossCurveRow {
  std::size_t generation = 0;
  std::size_t epoch = 0;
  double encoder = 0.0;
  double decoder = 0.0;
  double inner = 0.0;
  double outer = 0.0;
};
std::vector<LossCurveRow> normalized_loss_curves(
    const std::vector<InstantiationResult>& results,
    LossNormalizationScope scope = LossNormalizationScope::instantiation);
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossCurveRow>& rows);

/// A parsed CSV with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header; throws FormatError if absent.
  [[nodiscard]] std::size_t column(std::string_view name) const;
  [[nodiscard]] std::vector<double> numbers(std::string_view name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

// ---- latents and offline metrics ----

/// Continuous latents (encode_latent) of `count` variants of `glyph`, one
/// row per image.
std::vector<net::Vector> variant_latents(const Agent& agent, const glyph::Dataset& ds,
                                         std::size_t glyph, std::size_t count);
void write_latents_csv(const std::filesystem::path& path, const std::vector<std::string>& labels,
                       const std::vector<net::Vector>& latents);

/// Metrics recomputed from agent snapshots of consecutive generations.
struct RecomputedMetrics {
  std::size_t generation = 0;
  double x = 0.0;
  double c_raw = 0.0;
  double c = 0.0;
  std::optional<double> s;  // absent without a predecessor snapshot
};

/// `snapshots` are ordered by generation; s of each entry compares it with
/// the previous one. Throws DimensionError when signal widths differ.
std::vector<RecomputedMetrics> recompute_metrics(
    const std::vector<std::pair<std::size_t, std::filesystem::path>>& snapshots,
    const glyph::Dataset& ds);

/// Snapshot file name for a generation, e.g. "gen_0007.agent".
std::string snapshot_name(std::size_t generation);
/// Snapshots found in `dir`, ordered by generation.
std::vector<std::pair<std::size_t, std::filesystem::path>> list_snapshots(
    const std::filesystem::path& dir);

// ---- charts ----

/// x, c and s against generation: a thin line per instantiation and a thick
/// mean line, one panel per measure. Inputs are generations CSVs.
void plot_xcs(const std::vector<std::filesystem::path>& generation_csvs,
              const std::filesystem::path& svg_path);
/// Four loss panels against epoch, one line per generation, warmer colours
/// for later generations. Input is a losses CSV.
void plot_losses(const std::filesystem::path& loss_csv, const std::filesystem::path& svg_path);

/// Regenerates the charts of a run directory from its CSVs.
void plot_run(const std::filesystem::path& run_dir);

}  // namespace segilm::harness

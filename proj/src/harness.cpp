#include "segilm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "segilm/binio.hpp"
#include "segilm/error.hpp"
#include "segilm/metrics.hpp"

#ifndef SEGILM_VERSION
#define SEGILM_VERSION "unknown"
#endif

namespace segilm::harness {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw InvalidArgument("bad value for " + std::string(key) + ": '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") {
    return true;
  }
  if (text == "false" || text == "0" || text == "no") {
    return false;
  }
  throw InvalidArgument("bad boolean for " + std::string(key) + ": '" + std::string(text) + "'");
}

std::vector<std::size_t> parse_sizes(std::string_view key, std::string_view text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto x = text.find('x', start);
    const auto part = text.substr(start, x == std::string_view::npos ? text.npos : x - start);
    out.push_back(parse_number<std::size_t>(key, part));
    if (x == std::string_view::npos) {
      break;
    }
    start = x + 1;
  }
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& sizes) {
  std::string out;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    out += (i ? "x" : "") + std::to_string(sizes[i]);
  }
  return out;
}

std::string two_digits(std::size_t i) {
  std::ostringstream s;
  s << std::setw(2) << std::setfill('0') << i;
  return s.str();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  return out;
}

void check_written(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

}  // namespace

// ---- configuration ----

glyph::NoiseParams DatasetSpec::params() const {
  auto p = noise_level == 0 ? glyph::NoiseParams{} : glyph::NoiseParams::level(noise_level);
  p.translation_units = translation_units;
  return p;
}

std::string DatasetSpec::file_name() const {
  return "noise" + std::to_string(noise_level) + "_v" + std::to_string(variants) + "_s" +
         std::to_string(seed) +
         (translation_units == glyph::TranslationUnits::base ? "_tbase" : "") + ".bin";
}

void ExperimentConfig::validate() const {
  sim.validate();
  if (instantiations < 1) {
    throw InvalidArgument("need at least one instantiation");
  }
  if (dataset.variants < 1) {
    throw InvalidArgument("dataset needs at least one variant per glyph");
  }
  (void)dataset.params();
  if (latents && latent_glyph >= glyph::kGlyphCount) {
    throw InvalidArgument("latent glyph must be in [0, 127]");
  }
  if (latents && latent_variants > dataset.variants) {
    throw InvalidArgument("latent variant count exceeds the dataset's variants per glyph");
  }
}

std::vector<std::string> preset_names() {
  return {"fig3", "fig4", "fig6a", "fig6b", "fig6c", "fig7"};
}

ExperimentConfig preset(std::string_view name) {
  ExperimentConfig cfg;
  cfg.name = std::string(name);
  cfg.instantiations = 10;
  cfg.sim.generations = 100;
  if (name == "fig3") {
    cfg.sim.arch = AgentArch::symmetric(7);
    cfg.dataset.noise_level = 1;
  } else if (name == "fig4") {
    cfg.sim.arch = AgentArch::symmetric(7);
    cfg.sim.generations = 30;
    cfg.dataset.noise_level = 1;
    cfg.loss_curves = true;
  } else if (name == "fig6a") {
    cfg.sim.arch = AgentArch::symmetric(7);
    cfg.dataset.noise_level = 2;
  } else if (name == "fig6b") {
    cfg.sim.arch = AgentArch::symmetric(10);
    cfg.dataset.noise_level = 2;
  } else if (name == "fig6c") {
    cfg.sim.arch = AgentArch::with_word_encoder({20, 18, 15});
    cfg.dataset.noise_level = 3;
  } else if (name == "fig7") {
    cfg.sim.arch = AgentArch::with_word_encoder({16, 14, 12});
    cfg.dataset.noise_level = 3;
    cfg.instantiations = 1;
    cfg.sim.generations = 70;
    cfg.snapshot_first = 50;
    cfg.snapshot_last = 69;
    cfg.latents = true;
  } else {
    throw InvalidArgument("unknown preset '" + std::string(name) + "'");
  }
  return cfg;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  auto& sim = cfg.sim;
  auto size = [&] { return parse_number<std::size_t>(key, value); };
  if (key == "name") {
    cfg.name = std::string(value);
  } else if (key == "instantiations") {
    cfg.instantiations = size();
  } else if (key == "master_seed") {
    cfg.master_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "generations") {
    sim.generations = size();
  } else if (key == "bottleneck_glyphs") {
    sim.bottleneck_glyphs = size();
  } else if (key == "n_pairs") {
    sim.n_pairs = size();
  } else if (key == "n_everyday") {
    sim.n_everyday = size();
  } else if (key == "autoencoder_samples") {
    sim.autoencoder_samples = size();
  } else if (key == "epochs") {
    sim.epochs = size();
  } else if (key == "eta") {
    sim.train.eta = parse_number<double>(key, value);
  } else if (key == "loss") {
    if (value == "mean") {
      sim.train.normalization = net::LossNormalization::mean;
    } else if (value == "sum") {
      sim.train.normalization = net::LossNormalization::sum;
    } else {
      throw InvalidArgument("loss must be mean or sum");
    }
  } else if (key == "init") {
    if (value == "fan_in") {
      sim.init = net::InitScheme::fan_in_uniform;
    } else if (value == "glorot") {
      sim.init = net::InitScheme::glorot_uniform;
    } else {
      throw InvalidArgument("init must be fan_in or glorot");
    }
  } else if (key == "bottleneck_with_replacement") {
    sim.bottleneck_with_replacement = parse_bool(key, value);
  } else if (key == "n_latent") {
    sim.arch = AgentArch::symmetric(size(), sim.arch.ei_sizes.size() == 3 ? sim.arch.ei_sizes[1] : 128);
  } else if (key == "image_encoder") {
    sim.arch.ei_sizes = parse_sizes(key, value);
  } else if (key == "word_encoder") {
    sim.arch.ew_sizes = parse_sizes(key, value);
  } else if (key == "word_decoder") {
    sim.arch.dw_sizes = parse_sizes(key, value);
  } else if (key == "image_decoder") {
    sim.arch.di_sizes = parse_sizes(key, value);
  } else if (key == "noise") {
    cfg.dataset.noise_level = parse_number<int>(key, value);
    (void)cfg.dataset.params();
  } else if (key == "variants") {
    cfg.dataset.variants = size();
  } else if (key == "translation") {
    if (value == "upsampled") {
      cfg.dataset.translation_units = glyph::TranslationUnits::upsampled;
    } else if (value == "base") {
      cfg.dataset.translation_units = glyph::TranslationUnits::base;
    } else {
      throw InvalidArgument("translation must be upsampled or base");
    }
  } else if (key == "dataset_seed") {
    cfg.dataset.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "loss_curves") {
    cfg.loss_curves = parse_bool(key, value);
  } else if (key == "loss_norm") {
    if (value == "instantiation") {
      cfg.loss_scope = LossNormalizationScope::instantiation;
    } else if (value == "global") {
      cfg.loss_scope = LossNormalizationScope::global;
    } else {
      throw InvalidArgument("loss_norm must be instantiation or global");
    }
  } else if (key == "snapshot_first") {
    cfg.snapshot_first = size();
  } else if (key == "snapshot_last") {
    cfg.snapshot_last = size();
  } else if (key == "latents") {
    cfg.latents = parse_bool(key, value);
  } else if (key == "latent_glyph") {
    cfg.latent_glyph = size();
  } else if (key == "latent_variants") {
    cfg.latent_variants = size();
  } else {
    throw InvalidArgument("unknown setting '" + std::string(key) + "'");
  }
}

ExperimentConfig parse_config(std::string_view text, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  std::size_t line_no = 0;
  bool seen_setting = false;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    const auto stripped = trim(line);
    if (stripped.empty()) {
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(std::string_view(stripped).substr(0, eq));
    const auto value = trim(std::string_view(stripped).substr(eq + 1));
    try {
      if (key == "preset") {
        if (seen_setting) {
          throw InvalidArgument("preset must come before other settings");
        }
        cfg = preset(value);
      } else {
        apply_setting(cfg, key, value);
      }
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("config line " + std::to_string(line_no) + ": " + e.what());
    }
    seen_setting = true;
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path, const ExperimentConfig& base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open config " + path.string());
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), base);
}

std::string to_config_text(const ExperimentConfig& cfg) {
  const auto& sim = cfg.sim;
  std::ostringstream out;
  out << "name = " << cfg.name << '\n'
      << "instantiations = " << cfg.instantiations << '\n'
      << "master_seed = " << cfg.master_seed << '\n'
      << "generations = " << sim.generations << '\n'
      << "bottleneck_glyphs = " << sim.bottleneck_glyphs << '\n'
      << "n_pairs = " << sim.n_pairs << '\n'
      << "n_everyday = " << sim.n_everyday << '\n'
      << "autoencoder_samples = " << sim.autoencoder_samples << '\n'
      << "epochs = " << sim.epochs << '\n'
      << "eta = " << format_double(sim.train.eta) << '\n'
      << "loss = " << (sim.train.normalization == net::LossNormalization::mean ? "mean" : "sum")
      << '\n'
      << "init = " << (sim.init == net::InitScheme::fan_in_uniform ? "fan_in" : "glorot") << '\n'
      << "bottleneck_with_replacement = " << (sim.bottleneck_with_replacement ? "true" : "false")
      << '\n'
      << "image_encoder = " << join_sizes(sim.arch.ei_sizes) << '\n'
      << "word_encoder = " << join_sizes(sim.arch.ew_sizes) << '\n'
      << "word_decoder = " << join_sizes(sim.arch.dw_sizes) << '\n'
      << "image_decoder = " << join_sizes(sim.arch.di_sizes) << '\n'
      << "noise = " << cfg.dataset.noise_level << '\n'
      << "variants = " << cfg.dataset.variants << '\n'
      << "dataset_seed = " << cfg.dataset.seed << '\n'
      << "translation = "
      << (cfg.dataset.translation_units == glyph::TranslationUnits::base ? "base" : "upsampled")
      << '\n'
      << "loss_curves = " << (cfg.loss_curves ? "true" : "false") << '\n'
      << "loss_norm = "
      << (cfg.loss_scope == LossNormalizationScope::instantiation ? "instantiation" : "global")
      << '\n'
      << "snapshot_first = " << cfg.snapshot_first << '\n'
      << "snapshot_last = " << cfg.snapshot_last << '\n'
      << "latents = " << (cfg.latents ? "true" : "false") << '\n'
      << "latent_glyph = " << cfg.latent_glyph << '\n'
      << "latent_variants = " << cfg.latent_variants << '\n';
  return out.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  binio::Fnv1a h;
  h.update(to_config_text(cfg));
  return h.digest();
}

std::uint64_t instantiation_seed(std::uint64_t master_seed, std::size_t index) {
  return derive_seed(master_seed, index);
}

glyph::Dataset obtain_dataset(const DatasetSpec& spec, const fs::path& dir) {
  const auto path = dir / spec.file_name();
  if (fs::exists(path)) {
    auto ds = glyph::load_dataset(path);
    if (ds.params != spec.params() || ds.variants_per_glyph != spec.variants ||
        ds.seed != spec.seed) {
      throw FormatError(path.string() + " does not match its dataset spec");
    }
    return ds;
  }
  auto ds =
      glyph::generate_dataset(glyph::SegmentLayout::standard(), spec.params(), spec.variants, spec.seed);
  fs::create_directories(dir);
  // Write then rename so concurrent callers never see a partial file.
  const auto tmp = dir / (spec.file_name() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(
                                                          std::this_thread::get_id())));
  glyph::save_dataset(ds, tmp);
  fs::rename(tmp, path);
  return ds;
}

// ---- CSV ----

std::string format_double(double v) {
  if (std::isnan(v)) {
    return "nan";
  }
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::string> generation_columns(std::size_t epochs) {
  std::vector<std::string> cols{"generation", "x", "c_raw", "c", "s"};
  for (const char* prefix : {"enc_loss_", "dec_loss_", "inner_loss_", "outer_loss_"}) {
    for (std::size_t e = 1; e <= epochs; ++e) {
      cols.push_back(prefix + std::to_string(e));
    }
  }
  return cols;
}

void write_generations_csv(const fs::path& path, const std::vector<ilm::GenerationRecord>& records,
                           std::size_t epochs) {
  auto out = open_out(path);
  const auto cols = generation_columns(epochs);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out << (i ? "," : "") << cols[i];
  }
  out << '\n';
  for (const auto& r : records) {
    out << r.generation << ',' << format_double(r.x) << ',' << format_double(r.c_raw) << ','
        << format_double(r.c_reported()) << ',' << format_double(r.s);
    for (const auto* losses :
         {&r.losses.encoder, &r.losses.decoder, &r.losses.inner, &r.losses.outer}) {
      for (std::size_t e = 0; e < epochs; ++e) {
        out << ',' << (e < losses->size() ? format_double((*losses)[e]) : "nan");
      }
    }
    out << '\n';
  }
  check_written(out, path);
}

void write_aggregate_csv(const fs::path& path, const std::vector<InstantiationResult>& results) {
  auto out = open_out(path);
  out << "generation,n,x_mean,x_min,x_max,c_mean,c_min,c_max,s_mean,s_min,s_max\n";
  std::size_t generations = 0;
  for (const auto& r : results) {
    if (!r.error) {
      generations = std::max(generations, r.records.size());
    }
  }
  for (std::size_t g = 0; g < generations; ++g) {
    std::vector<const ilm::GenerationRecord*> rows;
    for (const auto& r : results) {
      if (!r.error && g < r.records.size()) {
        rows.push_back(&r.records[g]);
      }
    }
    out << rows.front()->generation << ',' << rows.size();
    for (auto field : {+[](const ilm::GenerationRecord& r) { return r.x; },
                       +[](const ilm::GenerationRecord& r) { return r.c_reported(); },
                       +[](const ilm::GenerationRecord& r) { return r.s; }}) {
      double sum = 0.0, lo = INFINITY, hi = -INFINITY;
      for (const auto* rec : rows) {
        const double v = field(*rec);
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      out << ',' << format_double(sum / static_cast<double>(rows.size())) << ','
          << format_double(lo) << ',' << format_double(hi);
    }
    out << '\n';
  }
  check_written(out, path);
}

std::vector<LossCurveRow> normalized_loss_curves(const std::vector<InstantiationResult>& results,
                                                 LossNormalizationScope scope) {
  std::vector<const InstantiationResult*> ok;
  for (const auto& r : results) {
    if (!r.error && !r.records.empty()) {
      ok.push_back(&r);
    }
  }
  if (ok.empty()) {
    return {};
  }
  std::size_t generations = ok.front()->records.size();
  for (const auto* r : ok) {
    generations = std::min(generations, r->records.size());
  }
  const std::size_t epochs = ok.front()->records.front().losses.encoder.size();

  using Series = std::vector<double> ilm::EpochLosses::*;
  const Series series[4] = {&ilm::EpochLosses::encoder, &ilm::EpochLosses::decoder,
                            &ilm::EpochLosses::inner, &ilm::EpochLosses::outer};
  std::vector<LossCurveRow> rows;
  for (std::size_t g = 0; g < generations; ++g) {
    for (std::size_t e = 0; e < epochs; ++e) {
      LossCurveRow row;
      row.generation = ok.front()->records[g].generation;
      row.epoch = e + 1;
      double* fields[4] = {&row.encoder, &row.decoder, &row.inner, &row.outer};
      for (int k = 0; k < 4; ++k) {
        double sum = 0.0, norm_sum = 0.0;
        for (const auto* r : ok) {
          const double norm = (r->records.front().losses.*series[k]).front();
          const double value = (r->records[g].losses.*series[k])[e];
          if (scope == LossNormalizationScope::instantiation) {
            sum += value / norm;
          } else {
            sum += value;
            norm_sum += norm;
          }
        }
        *fields[k] = scope == LossNormalizationScope::instantiation
                         ? sum / static_cast<double>(ok.size())
                         : sum / norm_sum;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_loss_csv(const fs::path& path, const std::vector<LossCurveRow>& rows) {
  auto out = open_out(path);
  out << "generation,epoch,encoder,decoder,inner,outer\n";
  for (const auto& r : rows) {
    out << r.generation << ',' << r.epoch << ',' << format_double(r.encoder) << ','
        << format_double(r.decoder) << ',' << format_double(r.inner) << ','
        << format_double(r.outer) << '\n';
  }
  check_written(out, path);
}

std::size_t CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw FormatError("CSV has no column '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<double> CsvTable::numbers(std::string_view name) const {
  const auto col = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    const auto& cell = row.at(col);
    if (cell == "nan") {
      out.push_back(std::nan(""));
      continue;
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
      throw FormatError("not a number in column " + std::string(name) + ": '" + cell + "'");
    }
    out.push_back(v);
  }
  return out;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos
                                                                    : comma - start));
      if (comma == std::string::npos) {
        return cells;
      }
      start = comma + 1;
    }
  };
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(path.string() + " is empty");
  }
  table.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    auto cells = split(line);
    if (cells.size() != table.header.size()) {
      throw FormatError(path.string() + ": row has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  return table;
}

// ---- latents and offline metrics ----

std::vector<net::Vector> variant_latents(const Agent& agent, const glyph::Dataset& ds,
                                         std::size_t glyph, std::size_t count) {
  if (glyph >= glyph::kGlyphCount) {
    throw InvalidArgument("glyph id out of range");
  }
  if (count > ds.variants_per_glyph) {
    throw InvalidArgument("only " + std::to_string(ds.variants_per_glyph) +
                          " variants per glyph in the dataset");
  }
  std::vector<net::Vector> out;
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(agent.encode_latent(to_vector(ds.variant(glyph, k))));
  }
  return out;
}

void write_latents_csv(const fs::path& path, const std::vector<std::string>& labels,
                       const std::vector<net::Vector>& latents) {
  if (labels.size() != latents.size()) {
    throw InvalidArgument("one label per latent row");
  }
  auto out = open_out(path);
  out << "row";
  const auto width = latents.empty() ? 0 : latents.front().size();
  for (Eigen::Index i = 0; i < width; ++i) {
    out << ",z" << i;
  }
  out << '\n';
  for (std::size_t r = 0; r < latents.size(); ++r) {
    out << labels[r];
    for (Eigen::Index i = 0; i < latents[r].size(); ++i) {
      out << ',' << format_double(latents[r][i]);
    }
    out << '\n';
  }
  check_written(out, path);
}

std::string snapshot_name(std::size_t generation) {
  std::ostringstream s;
  s << "gen_" << std::setw(4) << std::setfill('0') << generation << ".agent";
  return s.str();
}

std::vector<std::pair<std::size_t, fs::path>> list_snapshots(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw IoError("no snapshot directory " + dir.string());
  }
  std::vector<std::pair<std::size_t, fs::path>> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.size() < 11 || !name.starts_with("gen_") || !name.ends_with(".agent")) {
      continue;
    }
    const std::string_view digits(name.data() + 4, name.size() - 10);
    std::size_t g = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), g);
    if (ec == std::errc() && ptr == digits.data() + digits.size()) {
      out.emplace_back(g, entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<RecomputedMetrics> recompute_metrics(
    const std::vector<std::pair<std::size_t, fs::path>>& snapshots, const glyph::Dataset& ds) {
  std::vector<RecomputedMetrics> out;
  metrics::LanguageTable previous;
  std::optional<std::size_t> previous_generation;
  for (const auto& [generation, path] : snapshots) {
    const auto agent = load_agent(path);
    const auto table = metrics::language_table(agent, ds);
    RecomputedMetrics m;
    m.generation = generation;
    m.x = metrics::expressivity(table);
    m.c_raw = metrics::compositionality_raw(metrics::one_hot_signals(table));
    m.c = std::clamp(
        metrics::compositionality(m.c_raw, metrics::default_background(agent.arch().signal_width())),
        -0.1, 1.0);
    if (previous_generation) {
      if (previous.front().size() != table.front().size()) {
        throw DimensionError("snapshots of generations " + std::to_string(*previous_generation) +
                             " and " + std::to_string(generation) +
                             " have different signal widths");
      }
      if (*previous_generation + 1 == generation) {
        m.s = metrics::stability(table, previous);
      }
    }
    previous = table;
    previous_generation = generation;
    out.push_back(m);
  }
  return out;
}

// ---- runs ----

std::size_t RunResult::failures() const {
  return static_cast<std::size_t>(std::count_if(instantiations.begin(), instantiations.end(),
                                                [](const auto& r) { return r.error.has_value(); }));
}

RunResult run_experiment(const ExperimentConfig& cfg, const glyph::Dataset& ds,
                         const RunOptions& opts) {
  cfg.validate();
  if (ds.variants_per_glyph != cfg.dataset.variants || ds.params != cfg.dataset.params() ||
      ds.seed != cfg.dataset.seed) {
    throw InvalidArgument("dataset does not match the experiment's dataset spec");
  }
  fs::create_directories(opts.out_dir);

  RunResult result;
  result.instantiations.resize(cfg.instantiations);
  std::vector<std::exception_ptr> failures(cfg.instantiations);
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;

  auto run_one = [&](std::size_t index) {
    auto& res = result.instantiations[index];
    res.index = index;
    res.seed = instantiation_seed(cfg.master_seed, index);
    ilm::SimConfig sim = cfg.sim;
    sim.master_seed = res.seed;
    const auto inst_dir = opts.out_dir / ("inst_" + two_digits(index));
    if (cfg.snapshots_enabled() || cfg.latents) {
      fs::create_directories(inst_dir);
    }

    std::vector<std::string> latent_labels;
    std::vector<net::Vector> latent_rows;
    const auto base_image = to_vector(ds.base[cfg.latent_glyph]);
    auto in_window = [&](std::size_t g) {
      return cfg.snapshots_enabled() && g >= cfg.snapshot_first && g <= cfg.snapshot_last;
    };
    auto record_agent = [&](const Agent& agent, std::size_t g) {
      if (in_window(g)) {
        save_agent(agent, inst_dir / snapshot_name(g));
        if (cfg.latents) {
          latent_labels.push_back(std::to_string(g));
          latent_rows.push_back(agent.encode_latent(base_image));
        }
      }
      if (cfg.latents && g == sim.generations) {
        const auto rows = variant_latents(agent, ds, cfg.latent_glyph, cfg.latent_variants);
        std::vector<std::string> labels;
        for (std::size_t k = 0; k < rows.size(); ++k) {
          labels.push_back(std::to_string(k));
        }
        write_latents_csv(inst_dir / "latents_variants.csv", labels, rows);
      }
    };

    try {
      if (in_window(0)) {
        record_agent(ilm::initial_tutor(sim), 0);
      }
      res.records = ilm::run_chain(sim, ds, [&](const Agent& agent, const ilm::GenerationRecord& r) {
        record_agent(agent, r.generation);
        if (opts.progress) {
          std::lock_guard lock(progress_mutex);
          opts.progress(index, r);
        }
      });
    } catch (const DivergenceError& e) {
      res.error = e.what();
    }
    if (cfg.latents && !latent_rows.empty()) {
      write_latents_csv(inst_dir / "latents_generations.csv", latent_labels, latent_rows);
    }
    write_generations_csv(opts.out_dir / ("inst_" + two_digits(index) + ".csv"), res.records,
                          sim.epochs);
  };

  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.instantiations; i = next++) {
      try {
        run_one(i);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(opts.parallel, 1, cfg.instantiations);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto& t : pool) {
    t.join();
  }
  for (const auto& f : failures) {
    if (f) {
      std::rethrow_exception(f);
    }
  }

  if (result.failures() < cfg.instantiations) {
    write_aggregate_csv(opts.out_dir / "aggregate.csv", result.instantiations);
    if (cfg.loss_curves) {
      write_loss_csv(opts.out_dir / "losses.csv",
                     normalized_loss_curves(result.instantiations, cfg.loss_scope));
    }
  }

  {
    const auto path = opts.out_dir / "config.txt";
    auto out = open_out(path);
    out << to_config_text(cfg);
    check_written(out, path);
  }
  {
    const auto path = opts.out_dir / "manifest.txt";
    auto out = open_out(path);
    out << "schema_version = " << kCsvSchemaVersion << '\n'
        << "code_version = " << SEGILM_VERSION << '\n'
        << "config_hash = " << hex64(config_hash(cfg)) << '\n'
        << "dataset_file = " << cfg.dataset.file_name() << '\n'
        << "dataset_hash = " << hex64(glyph::dataset_hash(ds)) << '\n'
        << "master_seed = " << cfg.master_seed << '\n'
        << "c0 = " << format_double(metrics::default_background(cfg.sim.arch.signal_width()))
        << '\n';
    for (const auto& r : result.instantiations) {
      out << "seed_" << two_digits(r.index) << " = " << r.seed << '\n';
      out << "status_" << two_digits(r.index) << " = " << (r.error ? "diverged: " + *r.error : "ok")
          << '\n';
    }
    check_written(out, path);
  }

  if (opts.charts && result.failures() < cfg.instantiations) {
    plot_run(opts.out_dir);
  }
  return result;
}

}  // namespace segilm::harness

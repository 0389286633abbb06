#include "segilm/glyphset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "segilm/binio.hpp"
#include "segilm/error.hpp"

namespace segilm::glyph {

namespace {

constexpr char kDatasetMagic[8] = {'S', 'E', 'G', 'D', 'S', 'E', 'T', '\0'};
constexpr std::uint32_t kDatasetVersion = 1;

// Bilinear sample at (x, y) in pixel-index coordinates; zero outside.
double sample(const std::vector<double>& img, int side, double x, double y) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double fx = x - fx0;
  const double fy = y - fy0;
  auto at = [&](int r, int c) -> double {
    if (r < 0 || c < 0 || r >= side || c >= side) {
      return 0.0;
    }
    return img[static_cast<std::size_t>(r) * side + c];
  };
  const double top = (1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1);
  const double bottom = (1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1);
  return (1.0 - fy) * top + fy * bottom;
}

// Resamples `src` through the inverse map (x, y) -> source coordinates.
template <typename InverseMap>
std::vector<double> resample(const std::vector<double>& src, int side, InverseMap&& inverse) {
  std::vector<double> out(src.size(), 0.0);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const auto [sx, sy] = inverse(static_cast<double>(c), static_cast<double>(r));
      out[static_cast<std::size_t>(r) * side + c] = sample(src, side, sx, sy);
    }
  }
  return out;
}

void write_layout(binio::Writer& w, const SegmentLayout& layout) {
  w.value(layout.version);
  for (const auto& rect : layout.segments) {
    w.value(static_cast<std::int32_t>(rect.row));
    w.value(static_cast<std::int32_t>(rect.col));
    w.value(static_cast<std::int32_t>(rect.rows));
    w.value(static_cast<std::int32_t>(rect.cols));
  }
}

SegmentLayout read_layout(binio::Reader& r) {
  SegmentLayout layout;
  layout.version = r.value<std::uint32_t>();
  for (auto& rect : layout.segments) {
    rect.row = r.value<std::int32_t>();
    rect.col = r.value<std::int32_t>();
    rect.rows = r.value<std::int32_t>();
    rect.cols = r.value<std::int32_t>();
  }
  if (!layout.valid()) {
    throw FormatError("dataset segment layout lies outside the canvas");
  }
  return layout;
}

}  // namespace

GlyphId::GlyphId(int id) {
  if (id < 0 || id >= static_cast<int>(kGlyphCount)) {
    throw InvalidArgument("glyph id " + std::to_string(id) + " outside [0, 127]");
  }
  id_ = static_cast<std::uint8_t>(id);
}

GlyphId GlyphId::one_hot(std::size_t segment) {
  if (segment >= kSegmentCount) {
    throw InvalidArgument("segment index " + std::to_string(segment) + " outside [0, 6]");
  }
  return GlyphId(1 << segment);
}

SegmentLayout SegmentLayout::standard() {
  // Display box: rows 4..23, columns 8..19. Horizontal bars span the columns
  // between the vertical bars; vertical bars span the rows between the
  // horizontal bars.
  SegmentLayout layout;
  layout.version = 1;
  layout.segments = {{
      {4, 10, 2, 8},   // top
      {6, 18, 7, 2},   // top-right
      {15, 18, 7, 2},  // bottom-right
      {22, 10, 2, 8},  // bottom
      {15, 8, 7, 2},   // bottom-left
      {6, 8, 7, 2},    // top-left
      {13, 10, 2, 8},  // middle
  }};
  return layout;
}

bool SegmentLayout::valid() const {
  return std::all_of(segments.begin(), segments.end(), [](const Rect& r) {
    return r.rows > 0 && r.cols > 0 && r.row >= 0 && r.col >= 0 && r.row + r.rows <= kSide &&
           r.col + r.cols <= kSide;
  });
}

NoiseParams NoiseParams::level(int noise_level) {
  switch (noise_level) {
    case 1: return {.mu = 0.03, .rho = 0.05, .sigma = 4.0};
    case 2: return {.mu = 0.1, .rho = 0.1, .sigma = 5.0};
    case 3: return {.mu = 0.1, .rho = 0.25, .sigma = 8.0};
    default: throw InvalidArgument("noise level must be 1, 2 or 3");
  }
}

void NoiseParams::validate() const {
  auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!ok(mu) || !ok(rho) || !ok(sigma)) {
    throw InvalidArgument("noise parameters must be finite and non-negative");
  }
  if (upsample_factor < 1 || upsample_factor > 64) {
    throw InvalidArgument("upsample factor must be in [1, 64]");
  }
}

Image render_base_glyph(GlyphId id, const SegmentLayout& layout) {
  Image image{};
  for (std::size_t s = 0; s < kSegmentCount; ++s) {
    if (!id.lit(s)) {
      continue;
    }
    const Rect& rect = layout.segments[s];
    for (int r = rect.row; r < rect.row + rect.rows; ++r) {
      for (int c = rect.col; c < rect.col + rect.cols; ++c) {
        image[static_cast<std::size_t>(r) * kSide + c] = 1.0f;
      }
    }
  }
  return image;
}

Image make_variant(const Image& base, const NoiseParams& params, RandomStream& rng) {
  params.validate();
  const int factor = params.upsample_factor;
  const int side = kSide * factor;

  // Every draw is taken unconditionally so the stream position does not
  // depend on the parameter values.
  const double eps = rng.exponential(params.mu);
  const double theta = params.rho * rng.normal();
  const double unit = params.translation_units == TranslationUnits::base ? factor : 1.0;
  const double dx = params.sigma * unit * rng.normal();
  const double dy = params.sigma * unit * rng.normal();

  // Quantized to float so block means of lit regions reproduce it exactly.
  const double lit = static_cast<float>(std::max(0.0, 1.0 - eps));

  std::vector<double> up(static_cast<std::size_t>(side) * side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const float v = base[static_cast<std::size_t>(r / factor) * kSide + c / factor];
      up[static_cast<std::size_t>(r) * side + c] = v > 0.0f ? lit : 0.0;
    }
  }

  if (theta != 0.0) {
    const double centre = side / 2.0;
    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);
    up = resample(up, side, [&](double x, double y) {
      const double u = x + 0.5 - centre;
      const double v = y + 0.5 - centre;
      return std::pair{cos_t * u + sin_t * v + centre - 0.5, -sin_t * u + cos_t * v + centre - 0.5};
    });
  }
  if (dx != 0.0 || dy != 0.0) {
    up = resample(up, side, [&](double x, double y) { return std::pair{x - dx, y - dy}; });
  }

  Image out{};
  const double cells = static_cast<double>(factor) * factor;
  for (int r = 0; r < kSide; ++r) {
    for (int c = 0; c < kSide; ++c) {
      double sum = 0.0;
      for (int i = 0; i < factor; ++i) {
        const auto* row = &up[static_cast<std::size_t>(r * factor + i) * side + c * factor];
        for (int j = 0; j < factor; ++j) {
          sum += row[j];
        }
      }
      out[static_cast<std::size_t>(r) * kSide + c] =
          static_cast<float>(std::clamp(sum / cells, 0.0, 1.0));
    }
  }
  return out;
}

Dataset generate_dataset(const SegmentLayout& layout, const NoiseParams& params,
                         std::size_t variants_per_glyph, std::uint64_t seed) {
  if (variants_per_glyph < 1) {
    throw InvalidArgument("variants per glyph must be at least 1");
  }
  if (!layout.valid()) {
    throw InvalidArgument("segment layout lies outside the canvas");
  }
  params.validate();

  Dataset ds;
  ds.layout = layout;
  ds.params = params;
  ds.seed = seed;
  ds.variants_per_glyph = variants_per_glyph;
  ds.base.reserve(kGlyphCount);
  ds.variants.reserve(kGlyphCount * variants_per_glyph);
  const RandomStream root(seed);
  for (std::size_t g = 0; g < kGlyphCount; ++g) {
    ds.base.push_back(render_base_glyph(GlyphId(static_cast<int>(g)), layout));
    const RandomStream glyph_stream = root.split(g);
    for (std::size_t k = 0; k < variants_per_glyph; ++k) {
      RandomStream rng = glyph_stream.split(k);
      ds.variants.push_back(make_variant(ds.base.back(), params, rng));
    }
  }
  return ds;
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  binio::Writer w(out);
  w.bytes(kDatasetMagic, sizeof kDatasetMagic);
  w.value(kDatasetVersion);
  write_layout(w, ds.layout);
  w.value(ds.params.mu);
  w.value(ds.params.rho);
  w.value(ds.params.sigma);
  w.value(static_cast<std::int32_t>(ds.params.upsample_factor));
  w.value(static_cast<std::uint32_t>(ds.params.translation_units));
  w.value(ds.seed);
  w.value(static_cast<std::uint64_t>(ds.variants_per_glyph));
  w.value(static_cast<std::uint32_t>(kPixels));
  for (const auto& img : ds.base) {
    w.values(std::span<const float>(img));
  }
  for (const auto& img : ds.variants) {
    w.values(std::span<const float>(img));
  }
  const std::uint64_t checksum = w.checksum();
  w.value(checksum);
}

Dataset read_dataset(std::istream& in) {
  binio::Reader r(in);
  char magic[sizeof kDatasetMagic];
  r.bytes(magic, sizeof magic);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kDatasetMagic))) {
    throw VersionError("not a dataset file (bad magic header)");
  }
  if (const auto version = r.value<std::uint32_t>(); version != kDatasetVersion) {
    throw VersionError("unsupported dataset format version " + std::to_string(version));
  }
  Dataset ds;
  ds.layout = read_layout(r);
  ds.params.mu = r.value<double>();
  ds.params.rho = r.value<double>();
  ds.params.sigma = r.value<double>();
  ds.params.upsample_factor = r.value<std::int32_t>();
  const auto units = r.value<std::uint32_t>();
  if (units > 1) {
    throw FormatError("unknown translation unit code " + std::to_string(units));
  }
  ds.params.translation_units = static_cast<TranslationUnits>(units);
  ds.seed = r.value<std::uint64_t>();
  const auto variants = r.value<std::uint64_t>();
  if (variants < 1 || variants > (1u << 20)) {
    throw FormatError("implausible variant count " + std::to_string(variants));
  }
  ds.variants_per_glyph = static_cast<std::size_t>(variants);
  if (r.value<std::uint32_t>() != kPixels) {
    throw FormatError("dataset image size is not 28x28");
  }
  ds.base.resize(kGlyphCount);
  for (auto& img : ds.base) {
    r.values(std::span<float>(img));
  }
  ds.variants.resize(kGlyphCount * ds.variants_per_glyph);
  for (auto& img : ds.variants) {
    r.values(std::span<float>(img));
  }
  const std::uint64_t expected = r.checksum();
  if (r.value<std::uint64_t>() != expected) {
    throw ChecksumError("dataset checksum mismatch");
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  write_dataset(out, ds);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return read_dataset(in);
}

std::uint64_t dataset_hash(const Dataset& ds) {
  std::ostringstream buffer(std::ios::binary);
  write_dataset(buffer, ds);
  binio::Fnv1a hash;
  hash.update(buffer.view());
  return hash.digest();
}

void export_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out << std::setprecision(9) << "kind,glyph,index";
  for (std::size_t i = 0; i < kPixels; ++i) {
    out << ",p" << i;
  }
  out << '\n';
  auto row = [&](const char* kind, std::size_t glyph, std::size_t index, const Image& img) {
    out << kind << ',' << glyph << ',' << index;
    for (float v : img) {
      out << ',' << v;
    }
    out << '\n';
  };
  for (std::size_t g = 0; g < kGlyphCount; ++g) {
    row("base", g, 0, ds.base[g]);
  }
  for (std::size_t g = 0; g < kGlyphCount; ++g) {
    for (std::size_t k = 0; k < ds.variants_per_glyph; ++k) {
      row("variant", g, k, ds.variant(g, k));
    }
  }
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

void write_pgm(const Image& image, const std::filesystem::path& path, int scale) {
  if (scale < 1) {
    throw InvalidArgument("PGM scale must be positive");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  const int side = kSide * scale;
  out << "P5\n" << side << ' ' << side << "\n255\n";
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const float v = image[static_cast<std::size_t>(r / scale) * kSide + c / scale];
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
  }
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

}  // namespace segilm::glyph

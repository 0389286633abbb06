#pragma once

// Seven-segment glyph rasterization and noisy variant generation.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "segilm/random.hpp"

namespace segilm::glyph {

inline constexpr int kSide = 28;
inline constexpr std::size_t kPixels = kSide * kSide;
inline constexpr std::size_t kGlyphCount = 128;
inline constexpr std::size_t kSegmentCount = 7;

/// Segment k is lit iff bit k of the id is set. Segment order:
/// 0 top, 1 top-right, 2 bottom-right, 3 bottom, 4 bottom-left, 5 top-left,
/// 6 middle.
class GlyphId {
 public:
  constexpr GlyphId() = default;
  /// Throws InvalidArgument outside [0, 127].
  explicit GlyphId(int id);

  [[nodiscard]] constexpr std::size_t value() const { return id_; }
  [[nodiscard]] constexpr bool lit(std::size_t segment) const { return (id_ >> segment) & 1u; }

  /// The glyph with only `segment` lit.
  static GlyphId one_hot(std::size_t segment);

  auto operator<=>(const GlyphId&) const = default;

 private:
  std::uint8_t id_ = 0;
};

/// Row-major 28x28 intensities in [0, 1]. Stored as float so datasets
/// round-trip through their file format bit-exactly.
using Image = std::array<float, kPixels>;

struct Rect {
  int row = 0;
  int col = 0;
  int rows = 0;
  int cols = 0;

  bool operator==(const Rect&) const = default;
  [[nodiscard]] bool contains(int r, int c) const {
    return r >= row && r < row + rows && c >= col && c < col + cols;
  }
};

struct SegmentLayout {
  std::uint32_t version = 1;
  std::array<Rect, kSegmentCount> segments{};

  /// A 12x20 display centred on the canvas with 2-pixel-thick rectangular
  /// segments that do not overlap.
  static SegmentLayout standard();

  /// Every segment lies inside the canvas and has positive area.
  [[nodiscard]] bool valid() const;

  bool operator==(const SegmentLayout&) const = default;
};

enum class TranslationUnits : std::uint32_t {
  upsampled = 0,  // sigma measured on the upsampled canvas
  base = 1,       // sigma measured on the 28x28 canvas
};

struct NoiseParams {
  double mu = 0.0;     // mean of the exponential intensity dip
  double rho = 0.0;    // std-dev of the rotation angle, radians
  double sigma = 0.0;  // std-dev of the translation
  int upsample_factor = 10;
  TranslationUnits translation_units = TranslationUnits::upsampled;

  /// Noise levels 1, 2 and 3. Throws InvalidArgument for any other level.
  static NoiseParams level(int noise_level);

  /// Throws InvalidArgument on negative or non-finite parameters.
  void validate() const;

  bool operator==(const NoiseParams&) const = default;
};

Image render_base_glyph(GlyphId id, const SegmentLayout& layout = SegmentLayout::standard());

/// Upsample, dim lit pixels by one exponential draw, rotate about the canvas
/// centre, translate, then block-average back to 28x28. Rotation and
/// translation use bilinear sampling with zero fill.
Image make_variant(const Image& base, const NoiseParams& params, RandomStream& rng);

struct Dataset {
  SegmentLayout layout;
  NoiseParams params;
  std::uint64_t seed = 0;
  std::size_t variants_per_glyph = 0;
  std::vector<Image> base;      // kGlyphCount images
  std::vector<Image> variants;  // glyph-major, variants_per_glyph per glyph

  [[nodiscard]] const Image& variant(std::size_t glyph, std::size_t k) const {
    return variants[glyph * variants_per_glyph + k];
  }
  [[nodiscard]] std::size_t variant_count() const { return variants.size(); }
  /// Glyph that a flat variant index belongs to.
  [[nodiscard]] std::size_t glyph_of(std::size_t flat_index) const {
    return flat_index / variants_per_glyph;
  }

  bool operator==(const Dataset&) const = default;
};

/// Deterministic in all arguments. Variant k of glyph g is drawn from the
/// stream seed -> split(g) -> split(k).
Dataset generate_dataset(const SegmentLayout& layout, const NoiseParams& params,
                         std::size_t variants_per_glyph, std::uint64_t seed);

void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// FNV-1a over the serialized form; identifies a dataset in run manifests.
std::uint64_t dataset_hash(const Dataset& ds);

/// Plain-text export: a header, then one CSV row per image (kind, glyph,
/// index, 784 pixels).
void export_dataset_csv(const Dataset& ds, const std::filesystem::path& path);

/// Binary greyscale PGM, each pixel enlarged to scale x scale.
void write_pgm(const Image& image, const std::filesystem::path& path, int scale = 1);

}  // namespace segilm::glyph

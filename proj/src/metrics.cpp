#include "segilm/metrics.hpp"

#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <set>
#include <string>

#include "segilm/error.hpp"

namespace segilm::metrics {

namespace {

constexpr std::size_t kColumns = glyph::kSegmentCount;
constexpr unsigned kAllColumns = (1u << kColumns) - 1;

double phi(unsigned v) { return v > 0 ? 1.0 / static_cast<double>(v) : 0.0; }

unsigned row_mask(const std::array<std::uint8_t, 7>& row) {
  unsigned mask = 0;
  for (std::size_t j = 0; j < kColumns; ++j) {
    if (row[j] > 1) {
      throw InvalidArgument("bit matrix entries must be 0 or 1");
    }
    mask |= static_cast<unsigned>(row[j]) << j;
  }
  return mask;
}

unsigned flip_mask(unsigned mask) {
  return std::popcount(mask) >= 4 ? (~mask & kAllColumns) : mask;
}

double score_masks(const unsigned* rows) {
  double total = 0.0;
  std::array<unsigned, kColumns> column_sums{};
  for (std::size_t i = 0; i < kColumns; ++i) {
    total += phi(static_cast<unsigned>(std::popcount(rows[i])));
    for (std::size_t j = 0; j < kColumns; ++j) {
      column_sums[j] += (rows[i] >> j) & 1u;
    }
  }
  for (auto c : column_sums) {
    total += phi(c);
  }
  return total / 14.0;
}

// Flip-then-score maximized over all 7-subsets of the (already flipped) rows.
// Flipping acts row by row, so flipping every row up front is equivalent to
// flipping each submatrix.
double best_subset(const std::vector<unsigned>& flipped) {
  const std::size_t n = flipped.size();
  std::array<std::size_t, kColumns> idx{};
  for (std::size_t i = 0; i < kColumns; ++i) {
    idx[i] = i;
  }
  std::array<unsigned, kColumns> rows{};
  double best = 0.0;
  while (true) {
    for (std::size_t i = 0; i < kColumns; ++i) {
      rows[i] = flipped[idx[i]];
    }
    best = std::max(best, score_masks(rows.data()));
    if (best >= 1.0) {
      return best;
    }
    // Next combination in lexicographic order.
    std::size_t i = kColumns;
    while (i > 0 && idx[i - 1] == n - kColumns + (i - 1)) {
      --i;
    }
    if (i == 0) {
      return best;
    }
    ++idx[i - 1];
    for (std::size_t j = i; j < kColumns; ++j) {
      idx[j] = idx[j - 1] + 1;
    }
  }
}

}  // namespace

LanguageTable language_table(const Agent& agent, const glyph::Dataset& ds) {
  LanguageTable table;
  table.reserve(ds.base.size());
  for (const auto& image : ds.base) {
    table.push_back(agent.encode(to_vector(image)));
  }
  return table;
}

double expressivity(const LanguageTable& table) {
  if (table.empty()) {
    return 0.0;
  }
  const std::set<Signal> distinct(table.begin(), table.end());
  return static_cast<double>(distinct.size()) / static_cast<double>(table.size());
}

double stability(const LanguageTable& table, const LanguageTable& previous) {
  if (table.size() != previous.size()) {
    throw DimensionError("language tables differ in length");
  }
  if (table.empty()) {
    return 0.0;
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].size() != previous[i].size()) {
      throw DimensionError("signal widths differ: " + std::to_string(table[i].size()) + " vs " +
                           std::to_string(previous[i].size()));
    }
    same += table[i] == previous[i] ? 1 : 0;
  }
  return static_cast<double>(same) / static_cast<double>(table.size());
}

std::vector<Signal> one_hot_signals(const LanguageTable& table) {
  if (table.size() != glyph::kGlyphCount) {
    throw DimensionError("language table must cover all 128 glyphs");
  }
  std::vector<Signal> out;
  for (std::size_t s = 0; s < kColumns; ++s) {
    out.push_back(table[glyph::GlyphId::one_hot(s).value()]);
  }
  return out;
}

BitMatrix one_hot_matrix(const std::vector<Signal>& signals) {
  if (signals.size() != kColumns) {
    throw InvalidArgument("need exactly 7 one-hot signals");
  }
  const std::size_t n_bits = signals.front().size();
  BitMatrix matrix(n_bits);
  for (std::size_t j = 0; j < kColumns; ++j) {
    if (signals[j].size() != n_bits) {
      throw DimensionError("one-hot signals differ in width");
    }
    for (std::size_t a = 0; a < n_bits; ++a) {
      matrix[a][j] = signals[j][a];
    }
  }
  return matrix;
}

BitMatrix flip_rows(BitMatrix matrix) {
  for (auto& row : matrix) {
    const unsigned flipped = flip_mask(row_mask(row));
    for (std::size_t j = 0; j < kColumns; ++j) {
      row[j] = static_cast<std::uint8_t>((flipped >> j) & 1u);
    }
  }
  return matrix;
}

double composition_score(const BitMatrix& square) {
  if (square.size() != kColumns) {
    throw InvalidArgument("composition score needs a 7x7 matrix");
  }
  std::array<unsigned, kColumns> rows{};
  for (std::size_t i = 0; i < kColumns; ++i) {
    rows[i] = row_mask(square[i]);
  }
  return score_masks(rows.data());
}

double compositionality_raw(const BitMatrix& matrix) {
  if (matrix.size() < kColumns) {
    throw InvalidArgument("compositionality needs at least 7 signal bits, got " +
                          std::to_string(matrix.size()));
  }
  std::vector<unsigned> flipped;
  flipped.reserve(matrix.size());
  for (const auto& row : matrix) {
    flipped.push_back(flip_mask(row_mask(row)));
  }
  return best_subset(flipped);
}

double compositionality_raw(const std::vector<Signal>& signals) {
  return compositionality_raw(one_hot_matrix(signals));
}

BackgroundEstimate background_c0(std::size_t n_bits, std::size_t n_samples, RandomStream& rng) {
  if (n_samples < 1) {
    throw InvalidArgument("background estimate needs at least one sample");
  }
  if (n_bits < kColumns) {
    throw InvalidArgument("compositionality needs at least 7 signal bits");
  }
  std::vector<unsigned> flipped(n_bits);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (auto& row : flipped) {
      // Seven independent fair bits per row.
      row = flip_mask(static_cast<unsigned>(rng() >> 57));
    }
    const double value = best_subset(flipped);
    sum += value;
    sum_sq += value * value;
  }
  const double n = static_cast<double>(n_samples);
  BackgroundEstimate est;
  est.mean = sum / n;
  if (n_samples > 1) {
    const double var = std::max(0.0, (sum_sq - n * est.mean * est.mean) / (n - 1.0));
    est.standard_error = std::sqrt(var / n);
  }
  return est;
}

double compositionality(double raw, double c0) {
  if (!(c0 >= 0.0 && c0 < 1.0)) {
    throw InvalidArgument("background c0 must lie in [0, 1)");
  }
  return (raw - c0) / (1.0 - c0);
}

double default_background(std::size_t n_bits) {
  static std::mutex mutex;
  static std::map<std::size_t, double> cache;
  const std::lock_guard lock(mutex);
  if (const auto it = cache.find(n_bits); it != cache.end()) {
    return it->second;
  }
  RandomStream rng(derive_seed(0x6330ull, n_bits));
  const double c0 = background_c0(n_bits, 10'000, rng).mean;
  cache.emplace(n_bits, c0);
  return c0;
}

}  // namespace segilm::metrics

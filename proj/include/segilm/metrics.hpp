#pragma once

// Expressivity, stability and the one-hot compositionality proxy.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "segilm/agent.hpp"
#include "segilm/glyphset.hpp"
#include "segilm/random.hpp"

namespace segilm::metrics {

/// Signals for the 128 base glyphs, indexed by glyph id.
using LanguageTable = std::vector<Signal>;

LanguageTable language_table(const Agent& agent, const glyph::Dataset& ds);

/// Fraction of distinct signals over the table.
double expressivity(const LanguageTable& table);

/// Fraction of glyphs whose signal is identical in both tables.
/// Throws DimensionError when the tables differ in length or signal width.
double stability(const LanguageTable& table, const LanguageTable& previous);

/// Binary matrix with 7 columns (one per one-hot glyph, in segment order)
/// and one row per signal bit.
using BitMatrix = std::vector<std::array<std::uint8_t, 7>>;

BitMatrix one_hot_matrix(const std::vector<Signal>& one_hot_signals);
std::vector<Signal> one_hot_signals(const LanguageTable& table);

/// Complements each row holding four or more ones.
BitMatrix flip_rows(BitMatrix matrix);

/// Mean of the rectified reciprocals of the 7 row sums and 7 column sums of a
/// 7x7 matrix (phi(v) = v > 0 ? 1/v : 0). Applies no flips itself.
double composition_score(const BitMatrix& square);

/// Best composition_score over every 7-row subset, each subset flipped
/// independently. Throws InvalidArgument when the matrix has fewer than 7
/// rows.
double compositionality_raw(const BitMatrix& matrix);
double compositionality_raw(const std::vector<Signal>& one_hot_signals);

/// Monte Carlo mean of compositionality_raw over random Bernoulli(0.5)
/// matrices with `n_bits` rows.
struct BackgroundEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};
BackgroundEstimate background_c0(std::size_t n_bits, std::size_t n_samples, RandomStream& rng);

/// (raw - c0) / (1 - c0). Throws InvalidArgument unless 0 <= c0 < 1.
double compositionality(double raw, double c0);

/// Default background for a signal width: 10,000 samples from a stream that
/// depends only on the width.
double default_background(std::size_t n_bits);

}  // namespace segilm::metrics

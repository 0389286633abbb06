#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <numeric>

#include "segilm/error.hpp"
#include "segilm/metrics.hpp"

using namespace segilm;
using namespace segilm::metrics;

namespace {

// Exact mean of the raw score over uniformly random 7x7 matrices: the sum of
// the expected rectified reciprocals of one row sum (after the flip, 0..3
// ones) and one column sum, each times 7, over 14.
constexpr double kExactBackground7 = 13441026180899.0 / 28862180229120.0;

Signal signal_from_mask(unsigned mask, std::size_t width) {
  std::vector<std::uint8_t> bits(width);
  for (std::size_t i = 0; i < width; ++i) {
    bits[i] = (mask >> i) & 1u;
  }
  return Signal(bits);
}

LanguageTable table_of(const std::vector<unsigned>& masks, std::size_t width = 7) {
  LanguageTable t;
  for (auto m : masks) {
    t.push_back(signal_from_mask(m, width));
  }
  return t;
}

BitMatrix random_matrix(RandomStream& rng, std::size_t rows) {
  BitMatrix m(rows);
  for (auto& row : m) {
    for (auto& v : row) {
      v = rng.bernoulli(0.5) ? 1 : 0;
    }
  }
  return m;
}

BitMatrix identity(std::size_t rows = 7) {
  BitMatrix m(rows);
  for (std::size_t r = 0; r < 7 && r < rows; ++r) {
    m[r][r] = 1;
  }
  return m;
}

// Independent oracle: enumerate row subsets as bitmasks, flip and score from
// scratch with integer sums.
double brute_force_raw(const BitMatrix& m) {
  const auto n = static_cast<unsigned>(m.size());
  double best = 0.0;
  for (unsigned subset = 0; subset < (1u << n); ++subset) {
    if (std::popcount(subset) != 7) {
      continue;
    }
    int col_sums[7] = {};
    double total = 0.0;
    for (unsigned r = 0; r < n; ++r) {
      if (!((subset >> r) & 1u)) {
        continue;
      }
      int ones = 0;
      for (int c = 0; c < 7; ++c) {
        ones += m[r][c];
      }
      const bool flip = ones >= 4;
      const int row_sum = flip ? 7 - ones : ones;
      total += row_sum > 0 ? 1.0 / row_sum : 0.0;
      for (int c = 0; c < 7; ++c) {
        col_sums[c] += flip ? 1 - m[r][c] : m[r][c];
      }
    }
    for (int c = 0; c < 7; ++c) {
      total += col_sums[c] > 0 ? 1.0 / col_sums[c] : 0.0;
    }
    best = std::max(best, total / 14.0);
  }
  return best;
}

}  // namespace

TEST(Expressivity, AllDistinct) {
  std::vector<unsigned> masks(128);
  std::iota(masks.begin(), masks.end(), 0u);
  EXPECT_EQ(expressivity(table_of(masks)), 1.0);
}

TEST(Expressivity, AllIdentical) {
  EXPECT_EQ(expressivity(table_of(std::vector<unsigned>(128, 5))), 0.0078125);
}

TEST(Expressivity, SixtyFourDistinct) {
  std::vector<unsigned> masks(128);
  for (unsigned g = 0; g < 128; ++g) {
    masks[g] = g / 2;
  }
  EXPECT_EQ(expressivity(table_of(masks)), 0.5);
}

TEST(Stability, Identical) {
  std::vector<unsigned> masks(128);
  std::iota(masks.begin(), masks.end(), 0u);
  EXPECT_EQ(stability(table_of(masks), table_of(masks)), 1.0);
}

TEST(Stability, ComplementEverySignal) {
  std::vector<unsigned> masks(128), flipped(128);
  for (unsigned g = 0; g < 128; ++g) {
    masks[g] = (g * 37u) % 128u;
    flipped[g] = masks[g] ^ 0x7Fu;
  }
  EXPECT_EQ(stability(table_of(masks), table_of(flipped)), 0.0);
}

TEST(Stability, HalfMatching) {
  std::vector<unsigned> a(128), b(128);
  for (unsigned g = 0; g < 128; ++g) {
    a[g] = g;
    b[g] = g < 64 ? g : g ^ 1u;
  }
  EXPECT_EQ(stability(table_of(a), table_of(b)), 0.5);
}

TEST(Stability, WidthMismatch) {
  EXPECT_THROW(stability(table_of({1, 2}, 7), table_of({1, 2}, 8)), DimensionError);
  EXPECT_THROW(stability(table_of({1, 2}), table_of({1})), DimensionError);
}

TEST(Stability, InvariantUnderSharedPermutation) {
  RandomStream rng(3);
  std::vector<unsigned> a(128), b(128);
  for (unsigned g = 0; g < 128; ++g) {
    a[g] = static_cast<unsigned>(rng.below(128));
    b[g] = rng.bernoulli(0.4) ? a[g] : static_cast<unsigned>(rng.below(128));
  }
  std::vector<std::size_t> perm(128);
  std::iota(perm.begin(), perm.end(), 0u);
  rng.shuffle(perm);
  std::vector<unsigned> pa(128), pb(128);
  for (std::size_t i = 0; i < 128; ++i) {
    pa[i] = a[perm[i]];
    pb[i] = b[perm[i]];
  }
  EXPECT_EQ(stability(table_of(a), table_of(b)), stability(table_of(pa), table_of(pb)));
}

TEST(OneHot, SignalsAreColumns) {
  std::vector<unsigned> masks(128, 0);
  for (std::size_t k = 0; k < 7; ++k) {
    masks[1u << k] = 1u << (6 - k);
  }
  const auto signals = one_hot_signals(table_of(masks));
  ASSERT_EQ(signals.size(), 7u);
  const auto m = one_hot_matrix(signals);
  ASSERT_EQ(m.size(), 7u);
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_EQ(m[r][c], r == 6 - c ? 1 : 0);
    }
  }
}

TEST(FlipRows, Rule) {
  BitMatrix m{{1, 1, 1, 1, 1, 0, 0}, {1, 1, 1, 0, 0, 0, 0}, {1, 1, 1, 1, 1, 1, 1}};
  const auto f = flip_rows(m);
  EXPECT_EQ(f[0], (std::array<std::uint8_t, 7>{0, 0, 0, 0, 0, 1, 1}));
  EXPECT_EQ(f[1], m[1]);
  EXPECT_EQ(f[2], (std::array<std::uint8_t, 7>{}));
}

TEST(CompositionScore, Identity) { EXPECT_EQ(composition_score(identity()), 1.0); }

TEST(CompositionScore, AllOnesAfterFlip) {
  BitMatrix ones(7);
  for (auto& row : ones) {
    row.fill(1);
  }
  EXPECT_EQ(composition_score(flip_rows(ones)), 0.0);
  EXPECT_EQ(compositionality_raw(ones), 0.0);
}

TEST(CompositionScore, PairRowFixture) {
  BitMatrix m(7);
  m[0] = {1, 1, 0, 0, 0, 0, 0};
  for (std::size_t r = 1; r <= 5; ++r) {
    m[r][r + 1] = 1;
  }
  EXPECT_NEAR(composition_score(m), 12.5 / 14.0, 1e-12);
  EXPECT_NEAR(compositionality_raw(m), 12.5 / 14.0, 1e-12);
}

TEST(CompositionalityRaw, IdentityEmbedding) {
  EXPECT_EQ(compositionality_raw(identity()), 1.0);
}

TEST(CompositionalityRaw, SubsetRecovery) {
  auto m = identity(10);
  m[7].fill(1);
  m[8] = {1, 0, 1, 0, 1, 0, 1};
  m[9] = {0, 0, 0, 1, 1, 0, 0};
  EXPECT_EQ(compositionality_raw(m), 1.0);
}

TEST(CompositionalityRaw, FromSignals) {
  std::vector<Signal> signals;
  for (std::size_t k = 0; k < 7; ++k) {
    signals.push_back(signal_from_mask(1u << k, 8));
  }
  EXPECT_EQ(compositionality_raw(signals), 1.0);
}

TEST(CompositionalityRaw, TooFewRows) {
  EXPECT_THROW(compositionality_raw(BitMatrix(6)), InvalidArgument);
}

TEST(CompositionalityRaw, MatchesBruteForce) {
  RandomStream rng(101);
  for (std::size_t n = 7; n <= 12; ++n) {
    for (int trial = 0; trial < 200; ++trial) {
      const auto m = random_matrix(rng, n);
      ASSERT_NEAR(compositionality_raw(m), brute_force_raw(m), 1e-12) << "n_l=" << n;
    }
  }
}

TEST(CompositionalityRaw, FixedEightRowMatrix) {
  const BitMatrix m{{1, 0, 0, 1, 0, 0, 0}, {0, 1, 0, 0, 0, 0, 1}, {1, 1, 1, 1, 0, 1, 0},
                    {0, 0, 1, 0, 0, 0, 0}, {0, 0, 0, 0, 1, 1, 0}, {1, 0, 1, 0, 1, 0, 1},
                    {0, 1, 1, 0, 0, 1, 1}, {0, 0, 0, 0, 0, 0, 1}};
  EXPECT_DOUBLE_EQ(compositionality_raw(m), brute_force_raw(m));
}

TEST(CompositionalityRaw, RowPermutationInvariance) {
  RandomStream rng(102);
  for (int trial = 0; trial < 200; ++trial) {
    auto m = random_matrix(rng, 7 + rng.below(4));
    const double before = compositionality_raw(m);
    rng.shuffle(m);
    EXPECT_DOUBLE_EQ(compositionality_raw(m), before);
  }
}

TEST(CompositionalityRaw, ColumnPermutationInvariance) {
  RandomStream rng(103);
  for (int trial = 0; trial < 200; ++trial) {
    auto m = random_matrix(rng, 7 + rng.below(3));
    const double before = compositionality_raw(m);
    std::array<std::size_t, 7> perm{0, 1, 2, 3, 4, 5, 6};
    rng.shuffle(perm);
    for (auto& row : m) {
      const auto old = row;
      for (std::size_t c = 0; c < 7; ++c) {
        row[c] = old[perm[c]];
      }
    }
    EXPECT_DOUBLE_EQ(compositionality_raw(m), before);
  }
}

TEST(CompositionalityRaw, RowComplementInvariance) {
  RandomStream rng(104);
  for (int trial = 0; trial < 500; ++trial) {
    auto m = random_matrix(rng, 7);
    const double before = compositionality_raw(m);
    for (auto& v : m[rng.below(7)]) {
      v ^= 1;
    }
    EXPECT_DOUBLE_EQ(compositionality_raw(m), before);
  }
}

TEST(CompositionalityRaw, WithinUnitInterval) {
  RandomStream rng(105);
  for (int trial = 0; trial < 500; ++trial) {
    const double v = compositionality_raw(random_matrix(rng, 7 + rng.below(6)));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(CompositionalityRaw, OneForPermutedFlippedIdentity) {
  RandomStream rng(106);
  auto m = identity(9);
  m[7] = {1, 1, 0, 1, 1, 0, 1};
  m[8] = {0, 1, 1, 1, 0, 0, 0};
  for (std::size_t r = 0; r < 7; ++r) {
    if (rng.bernoulli(0.5)) {
      for (auto& v : m[r]) {
        v ^= 1;
      }
    }
  }
  rng.shuffle(m);
  EXPECT_EQ(compositionality_raw(m), 1.0);
}

TEST(Compositionality, Normalization) {
  EXPECT_EQ(compositionality(1.0, 0.3), 1.0);
  EXPECT_EQ(compositionality(1.0, 0.0), 1.0);
  EXPECT_EQ(compositionality(0.4, 0.4), 0.0);
  EXPECT_NEAR(compositionality(0.8929, 0.4), 0.8215, 5e-5);
  EXPECT_LT(compositionality(0.2, 0.4), 0.0);
  EXPECT_THROW(compositionality(0.5, 1.0), InvalidArgument);
  EXPECT_THROW(compositionality(0.5, -0.1), InvalidArgument);
}

TEST(Background, SameSeedSameEstimate) {
  RandomStream a(7), b(7);
  const auto ea = background_c0(7, 2000, a);
  const auto eb = background_c0(7, 2000, b);
  EXPECT_EQ(ea.mean, eb.mean);
  EXPECT_EQ(ea.standard_error, eb.standard_error);
  EXPECT_GT(ea.mean, 0.0);
  EXPECT_LT(ea.mean, 1.0);
}

TEST(Background, AgreesWithExactValue) {
  RandomStream rng(8);
  const auto e = background_c0(7, 20000, rng);
  EXPECT_NEAR(e.mean, kExactBackground7, 4.0 * e.standard_error);
  EXPECT_NEAR(default_background(7), kExactBackground7, 0.003);
}

TEST(Background, ExactValueByEnumeration) {
  // Rows and columns of a uniform 7x7 matrix: a row's flipped sum is
  // min(k, 7-k) for k ~ Bin(7, 1/2); each flipped entry of a column is 1
  // with probability 22/64. Sum the two expectations independently.
  auto binom = [](int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) {
      r = r * (n - k + i) / i;
    }
    return r;
  };
  double row = 0.0;
  for (int k = 0; k <= 7; ++k) {
    const int v = std::min(k, 7 - k);
    row += binom(7, k) / 128.0 * (v > 0 ? 1.0 / v : 0.0);
  }
  double col = 0.0;
  const double p = 22.0 / 64.0;
  for (int k = 1; k <= 7; ++k) {
    col += binom(7, k) * std::pow(p, k) * std::pow(1 - p, 7 - k) / k;
  }
  EXPECT_NEAR((row + col) / 2.0, kExactBackground7, 1e-15);
}

TEST(Background, WiderSignalsScoreHigher) {
  RandomStream a(9), b(9);
  EXPECT_GT(background_c0(10, 2000, b).mean, background_c0(7, 2000, a).mean);
}

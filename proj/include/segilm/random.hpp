#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace segilm {

// Mixes a 64-bit value (splitmix64 finalizer). Used for seed derivation.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
  return mix64(mix64(parent) ^ (tag * 0xD6E8FEB86659FD93ull + 0x2545F4914F6CDD1Dull));
}

/// Counter-based random stream (Philox4x32-10).
///
/// A stream is identified by a 64-bit key; successive draws walk a 128-bit
/// counter. `split(tag)` derives an independent child stream from the key
/// alone, so the children of a stream do not depend on how many numbers the
/// parent has already produced. All distributions are implemented here
/// rather than taken from <random> so draws are identical across standard
/// libraries.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed = 0) : key_(mix64(seed)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  [[nodiscard]] RandomStream split(std::uint64_t tag) const {
    RandomStream child;
    child.key_ = derive_seed(key_, tag);
    return child;
  }

  [[nodiscard]] std::uint64_t key() const { return key_; }

  result_type operator()() {
    if (lane_ == 2) {
      refill();
    }
    return block_[lane_++];
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1].
  double uniform_open_low() { return (static_cast<double>((*this)() >> 11) + 1.0) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    // Lemire's nearly-divisionless method.
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal (Box-Muller, one value per pair of uniforms).
  double normal() {
    const double u1 = uniform_open_low();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Exponential with the given mean (scale). mean == 0 yields 0.
  double exponential(double mean) { return -mean * std::log(uniform_open_low()); }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename Container>
  void shuffle(Container& c) {
    using std::swap;
    for (std::size_t i = c.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      swap(c[i - 1], c[j]);
    }
  }

  /// The raw block function.
  static constexpr std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                              std::array<std::uint32_t, 2> k) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53u) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57u) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k[1], static_cast<std::uint32_t>(p0)};
      k[0] += 0x9E3779B9u;
      k[1] += 0xBB67AE85u;
    }
    return ctr;
  }

 private:
  void refill() {
    const auto out = philox4x32_10({static_cast<std::uint32_t>(counter_),
                                    static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u},
                                   {static_cast<std::uint32_t>(key_),
                                    static_cast<std::uint32_t>(key_ >> 32)});
    block_[0] = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    block_[1] = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    ++counter_;
    lane_ = 0;
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> block_{};
  unsigned lane_ = 2;
};

}  // namespace segilm

#pragma once

// Generational transmission: bottleneck sampling, the per-iteration training
// schedule and the tutor -> pupil chain.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "segilm/agent.hpp"
#include "segilm/glyphset.hpp"
#include "segilm/metrics.hpp"
#include "segilm/net.hpp"
#include "segilm/random.hpp"

namespace segilm::ilm {

struct SimConfig {
  std::size_t bottleneck_glyphs = 40;     // b
  std::size_t n_pairs = 400;              // bottleneck image-signal pairs
  std::size_t n_everyday = 1200;          // everyday images
  std::size_t autoencoder_samples = 15;   // r, per autoencoder per iteration
  std::size_t epochs = 15;                // per pupil
  net::TrainConfig train{};               // eta = 15, mean MSE
  std::size_t generations = 100;
  AgentArch arch = AgentArch::symmetric(7);
  net::InitScheme init = net::InitScheme::fan_in_uniform;
  std::uint64_t master_seed = 1;
  bool bottleneck_with_replacement = true;

  /// Throws InvalidArgument on out-of-range settings.
  void validate() const;
};

struct BottleneckPair {
  std::size_t glyph = 0;
  std::size_t image = 0;  // flat variant index into the dataset
  Signal signal;          // tutor's encoding of the image
};

struct BottleneckSet {
  std::vector<std::size_t> glyphs;  // the b distinct glyphs, in draw order
  std::vector<BottleneckPair> pairs;
};

/// b distinct glyphs uniformly without replacement, then n_pairs images from
/// their variant pools (with replacement unless configured otherwise), each
/// labelled by the tutor.
BottleneckSet sample_bottleneck(const Agent& tutor, const glyph::Dataset& ds,
                                const SimConfig& cfg, RandomStream& rng);

/// n_everyday flat variant indices, uniform with replacement.
std::vector<std::size_t> sample_everyday(const glyph::Dataset& ds, const SimConfig& cfg,
                                         RandomStream& rng);

/// Mean loss per epoch for each training configuration. Configurations with
/// no steps in an epoch record NaN.
struct EpochLosses {
  std::vector<double> encoder;
  std::vector<double> decoder;
  std::vector<double> outer;
  std::vector<double> inner;
};

struct StepCounters {
  std::uint64_t encoder = 0;
  std::uint64_t decoder = 0;
  std::uint64_t outer = 0;
  std::uint64_t inner = 0;

  [[nodiscard]] std::uint64_t supervised() const { return encoder + decoder; }
  [[nodiscard]] std::uint64_t autoencoder() const { return outer + inner; }
};

/// Trains `pupil` for cfg.epochs epochs. Each epoch shuffles the bottleneck;
/// each element trains the encoder and the decoder, then r everyday images
/// train the outer autoencoder and r more train the inner one.
EpochLosses train_on(Agent& pupil, const BottleneckSet& bottleneck,
                     const std::vector<std::size_t>& everyday, const glyph::Dataset& ds,
                     const SimConfig& cfg, RandomStream& rng, StepCounters* counters = nullptr);

/// Samples a bottleneck from `tutor` and an everyday set, then runs train_on.
/// The three purposes draw from independent child streams of `rng`.
EpochLosses train_pupil(const Agent& tutor, Agent& pupil, const glyph::Dataset& ds,
                        const SimConfig& cfg, RandomStream& rng,
                        StepCounters* counters = nullptr);

struct GenerationRecord {
  std::size_t generation = 0;
  metrics::LanguageTable table;
  double x = 0.0;
  double c_raw = 0.0;
  double c = 0.0;  // normalized, unclamped
  double s = 0.0;
  EpochLosses losses;
  double seconds = 0.0;

  /// c clamped to [-0.1, 1] for reporting.
  [[nodiscard]] double c_reported() const;
};

/// Language measures of `pupil` against the previous generation's table.
void evaluate(const Agent& pupil, const metrics::LanguageTable& previous,
              const glyph::Dataset& ds, double c0, GenerationRecord& record);

/// Called after every generation with the trained pupil and its record.
using GenerationObserver = std::function<void(const Agent&, const GenerationRecord&)>;

/// Generation 0 is a naive agent acting as the first tutor. Each generation
/// trains a fresh pupil from the current tutor, scores it, and hands over.
/// Deterministic in (cfg, ds). Divergence is rethrown naming the generation.
std::vector<GenerationRecord> run_chain(const SimConfig& cfg, const glyph::Dataset& ds,
                                        const GenerationObserver& observer = {});

/// The naive generation-0 agent run_chain starts from.
Agent initial_tutor(const SimConfig& cfg);

}  // namespace segilm::ilm

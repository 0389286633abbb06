#include "segilm/ilm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "segilm/error.hpp"

namespace segilm::ilm {

namespace {

// Child-stream tags. Changing any of these changes every run.
enum StreamTag : std::uint64_t {
  kTagPupil = 0x11,
  kTagBottleneck = 0x20,
  kTagEveryday = 0x21,
  kTagSchedule = 0x22,
};

double mean_or_nan(double sum, std::size_t n) {
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

void SimConfig::validate() const {
  arch.validate();
  if (arch.ei_sizes.front() != glyph::kPixels) {
    throw DimensionError("image networks must read and write 784-vectors");
  }
  if (bottleneck_glyphs < 1 || bottleneck_glyphs > glyph::kGlyphCount) {
    throw InvalidArgument("bottleneck glyph count must be in [1, 128]");
  }
  if (n_pairs < 1) {
    throw InvalidArgument("bottleneck needs at least one pair");
  }
  if (generations < 1) {
    throw InvalidArgument("need at least one generation");
  }
  if (!(train.eta > 0.0) || !std::isfinite(train.eta)) {
    throw InvalidArgument("learning rate must be positive");
  }
  if (arch.signal_width() < glyph::kSegmentCount) {
    throw InvalidArgument("signal width must be at least 7 for the compositionality measure");
  }
}

BottleneckSet sample_bottleneck(const Agent& tutor, const glyph::Dataset& ds,
                                const SimConfig& cfg, RandomStream& rng) {
  const std::size_t per_glyph = ds.variants_per_glyph;
  const std::size_t b = cfg.bottleneck_glyphs;

  std::vector<std::size_t> all(glyph::kGlyphCount);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t i = 0; i < b; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(all.size() - i));
    std::swap(all[i], all[j]);
  }
  BottleneckSet set;
  set.glyphs.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(b));

  const std::size_t pool = b * per_glyph;
  auto flat_index = [&](std::size_t k) {
    return set.glyphs[k / per_glyph] * per_glyph + k % per_glyph;
  };
  std::vector<std::size_t> picks;
  if (cfg.bottleneck_with_replacement) {
    for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
      picks.push_back(flat_index(static_cast<std::size_t>(rng.below(pool))));
    }
  } else {
    if (cfg.n_pairs > pool) {
      throw InvalidArgument("bottleneck without replacement needs n_pairs <= b * variants");
    }
    std::vector<std::size_t> candidates(pool);
    std::iota(candidates.begin(), candidates.end(), 0);
    for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(pool - i));
      std::swap(candidates[i], candidates[j]);
      picks.push_back(flat_index(candidates[i]));
    }
  }

  set.pairs.reserve(picks.size());
  for (auto image : picks) {
    set.pairs.push_back({ds.glyph_of(image), image, tutor.encode(to_vector(ds.variants[image]))});
  }
  return set;
}

std::vector<std::size_t> sample_everyday(const glyph::Dataset& ds, const SimConfig& cfg,
                                         RandomStream& rng) {
  std::vector<std::size_t> out;
  out.reserve(cfg.n_everyday);
  for (std::size_t i = 0; i < cfg.n_everyday; ++i) {
    out.push_back(static_cast<std::size_t>(rng.below(ds.variant_count())));
  }
  return out;
}

EpochLosses train_on(Agent& pupil, const BottleneckSet& bottleneck,
                     const std::vector<std::size_t>& everyday, const glyph::Dataset& ds,
                     const SimConfig& cfg, RandomStream& rng, StepCounters* counters) {
  const std::size_t r = everyday.empty() ? 0 : cfg.autoencoder_samples;
  std::vector<net::Vector> pair_images;
  pair_images.reserve(bottleneck.pairs.size());
  for (const auto& pair : bottleneck.pairs) {
    pair_images.push_back(to_vector(ds.variants[pair.image]));
  }

  EpochLosses losses;
  std::vector<std::size_t> order(bottleneck.pairs.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double enc = 0.0, dec = 0.0, outer = 0.0, inner = 0.0;
    std::size_t n_outer = 0, n_inner = 0;
    const char* phase = "encoder";
    std::size_t iteration = 0;
    try {
      for (; iteration < order.size(); ++iteration) {
        const auto& pair = bottleneck.pairs[order[iteration]];
        const auto& image = pair_images[order[iteration]];
        phase = "encoder";
        enc += pupil.train_encoder_pair(image, pair.signal, cfg.train);
        phase = "decoder";
        dec += pupil.train_decoder_pair(pair.signal, image, cfg.train);
        phase = "outer";
        for (std::size_t k = 0; k < r; ++k) {
          const auto pick = everyday[static_cast<std::size_t>(rng.below(everyday.size()))];
          outer += pupil.train_outer(to_vector(ds.variants[pick]), cfg.train);
          ++n_outer;
        }
        phase = "inner";
        for (std::size_t k = 0; k < r; ++k) {
          const auto pick = everyday[static_cast<std::size_t>(rng.below(everyday.size()))];
          inner += pupil.train_inner(to_vector(ds.variants[pick]), cfg.train);
          ++n_inner;
        }
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " in " + phase + " training at epoch " +
                            std::to_string(epoch + 1) + ", iteration " +
                            std::to_string(iteration + 1));
    }
    if (counters) {
      counters->encoder += order.size();
      counters->decoder += order.size();
      counters->outer += n_outer;
      counters->inner += n_inner;
    }
    losses.encoder.push_back(mean_or_nan(enc, order.size()));
    losses.decoder.push_back(mean_or_nan(dec, order.size()));
    losses.outer.push_back(mean_or_nan(outer, n_outer));
    losses.inner.push_back(mean_or_nan(inner, n_inner));
  }
  return losses;
}

EpochLosses train_pupil(const Agent& tutor, Agent& pupil, const glyph::Dataset& ds,
                        const SimConfig& cfg, RandomStream& rng, StepCounters* counters) {
  RandomStream bottleneck_rng = rng.split(kTagBottleneck);
  RandomStream everyday_rng = rng.split(kTagEveryday);
  RandomStream schedule_rng = rng.split(kTagSchedule);
  const auto bottleneck = sample_bottleneck(tutor, ds, cfg, bottleneck_rng);
  const auto everyday = sample_everyday(ds, cfg, everyday_rng);
  return train_on(pupil, bottleneck, everyday, ds, cfg, schedule_rng, counters);
}

double GenerationRecord::c_reported() const { return std::clamp(c, -0.1, 1.0); }

void evaluate(const Agent& pupil, const metrics::LanguageTable& previous,
              const glyph::Dataset& ds, double c0, GenerationRecord& record) {
  record.table = metrics::language_table(pupil, ds);
  record.x = metrics::expressivity(record.table);
  record.c_raw = metrics::compositionality_raw(metrics::one_hot_signals(record.table));
  record.c = metrics::compositionality(record.c_raw, c0);
  record.s = metrics::stability(record.table, previous);
}

Agent initial_tutor(const SimConfig& cfg) {
  // Generation 0's stream, initialized the same way as every pupil.
  RandomStream rng = RandomStream(cfg.master_seed).split(0).split(kTagPupil);
  return Agent::naive(cfg.arch, rng, cfg.init);
}

std::vector<GenerationRecord> run_chain(const SimConfig& cfg, const glyph::Dataset& ds,
                                        const GenerationObserver& observer) {
  cfg.validate();
  const double c0 = metrics::default_background(cfg.arch.signal_width());
  const RandomStream master(cfg.master_seed);

  Agent tutor = initial_tutor(cfg);
  metrics::LanguageTable previous = metrics::language_table(tutor, ds);

  std::vector<GenerationRecord> records;
  records.reserve(cfg.generations);
  for (std::size_t g = 1; g <= cfg.generations; ++g) {
    const auto start = std::chrono::steady_clock::now();
    RandomStream gen_rng = master.split(g);
    RandomStream init_rng = gen_rng.split(kTagPupil);
    Agent pupil = Agent::naive(cfg.arch, init_rng, cfg.init);

    GenerationRecord record;
    record.generation = g;
    try {
      record.losses = train_pupil(tutor, pupil, ds, cfg, gen_rng);
    } catch (const DivergenceError& e) {
      throw DivergenceError("generation " + std::to_string(g) + ": " + e.what());
    }
    evaluate(pupil, previous, ds, c0, record);
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (observer) {
      observer(pupil, record);
    }
    previous = record.table;
    tutor = std::move(pupil);
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace segilm::ilm

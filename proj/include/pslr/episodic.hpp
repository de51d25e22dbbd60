#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "pslr/pose_data.hpp"
#include "pslr/prototypical.hpp"
#include "pslr/rng.hpp"

namespace pslr {

// Per-split class index over a manifest.
struct SplitIndex {
  const DatasetManifest* manifest = nullptr;
  Split split = Split::train;
  std::vector<std::string> classes;                  // glosses, lexicographic
  std::vector<std::vector<std::size_t>> by_class;    // manifest entry indices

  SplitIndex(const DatasetManifest& m, Split s);
  // Classes with at least min_count samples in this split.
  std::vector<std::size_t> eligible(std::size_t min_count) const;
};

struct EpisodeItem {
  std::size_t manifest_index;
  int local_label;
};

struct Episode {
  std::size_t n_way = 0, k_shot = 0, q_query = 0;
  std::vector<EpisodeItem> support;  // N*K
  std::vector<EpisodeItem> query;    // N*Q
  std::vector<std::string> class_map;  // local label -> gloss
};

// N classes drawn uniformly without replacement from the eligible classes;
// K+Q samples per class without replacement, first K to support.
Episode sample_episode(const SplitIndex& index, std::size_t n_way, std::size_t k_shot,
                       std::size_t q_query, Rng& rng);

struct StreamOptions {
  std::size_t n_way = 200;
  std::size_t k_shot = 3;
  std::size_t q_query = 2;
  std::size_t num_episodes = 50000;
  std::uint64_t seed = 1;
  bool augment = true;
  std::vector<double> speed_factors = {0.8, 1.0, 1.25};
  std::size_t frames = 64;  // resample target
  double tau = 0.3;
};

struct LoadedEpisode {
  std::size_t index = 0;
  Episode meta;
  EpisodeBatch batch;
};

// Deterministic episode stream: episode i draws from its own substream of
// seed, so the sequence does not depend on consumption order. Loaded samples
// are speed-augmented (factor uniform over speed_factors when augmentation is
// on) and resampled to a fixed length.
class EpisodeStream {
 public:
  EpisodeStream(const DatasetManifest& manifest, Split split, StreamOptions opts);

  std::size_t size() const { return opts_.num_episodes; }
  // Episodes by index in [0, size()).
  LoadedEpisode load(std::size_t episode_index) const;
  // Sequential convenience; empty after size() episodes.
  std::optional<LoadedEpisode> next();

  const SplitIndex& index() const { return index_; }

 private:
  SplitIndex index_;
  StreamOptions opts_;
  std::size_t cursor_ = 0;
  // Decoded-file cache; normalization is deterministic so this is purely a
  // speedup.
  mutable std::unordered_map<std::size_t, NormalizedSample> cache_;
};

}  // namespace pslr

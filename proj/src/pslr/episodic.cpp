#include "pslr/episodic.hpp"

#include <algorithm>
#include <map>

#include "pslr/errors.hpp"

namespace pslr {

SplitIndex::SplitIndex(const DatasetManifest& m, Split s) : manifest(&m), split(s) {
  std::map<std::string, std::vector<std::size_t>> grouped;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    if (m.entries[i].split == s) grouped[m.entries[i].gloss].push_back(i);
  }
  for (auto& [gloss, indices] : grouped) {
    classes.push_back(gloss);
    by_class.push_back(std::move(indices));
  }
}

std::vector<std::size_t> SplitIndex::eligible(std::size_t min_count) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (by_class[c].size() >= min_count) out.push_back(c);
  }
  return out;
}

Episode sample_episode(const SplitIndex& index, std::size_t n_way, std::size_t k_shot,
                       std::size_t q_query, Rng& rng) {
  if (n_way < 2) throw ConfigError("episodes need at least 2 classes (N >= 2)");
  if (k_shot < 1 || q_query < 1) throw ConfigError("episodes need K >= 1 and Q >= 1");
  const std::size_t need = k_shot + q_query;
  const std::vector<std::size_t> pool = index.eligible(need);
  if (pool.size() < n_way) {
    throw DataError("split '" + std::string(split_name(index.split)) + "' has only " +
                    std::to_string(pool.size()) + " classes with at least " +
                    std::to_string(need) + " samples; " + std::to_string(n_way) +
                    "-way episodes need " + std::to_string(n_way - pool.size()) + " more");
  }

  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  ep.q_query = q_query;
  const std::vector<std::size_t> picked = rng.sample_without_replacement(pool.size(), n_way);
  for (std::size_t local = 0; local < n_way; ++local) {
    const std::size_t cls = pool[picked[local]];
    ep.class_map.push_back(index.classes[cls]);
    const auto& samples = index.by_class[cls];
    const std::vector<std::size_t> chosen = rng.sample_without_replacement(samples.size(), need);
    for (std::size_t i = 0; i < need; ++i) {
      const EpisodeItem item{samples[chosen[i]], static_cast<int>(local)};
      if (i < k_shot) {
        ep.support.push_back(item);
      } else {
        ep.query.push_back(item);
      }
    }
  }
  return ep;
}

EpisodeStream::EpisodeStream(const DatasetManifest& manifest, Split split, StreamOptions opts)
    : index_(manifest, split), opts_(std::move(opts)) {
  if (opts_.speed_factors.empty()) throw ConfigError("speed factor list is empty");
  if (opts_.frames < 2) throw ConfigError("stream frame target must be >= 2");
}

LoadedEpisode EpisodeStream::load(std::size_t episode_index) const {
  Rng rng(derive_seed(opts_.seed, "episode", episode_index));
  try {
    LoadedEpisode out;
    out.index = episode_index;
    out.meta = sample_episode(index_, opts_.n_way, opts_.k_shot, opts_.q_query, rng);
    out.batch.n_classes = opts_.n_way;

    auto load_item = [&](const EpisodeItem& item, std::vector<EncoderInput>& dst,
                         std::vector<int>& labels) {
      auto it = cache_.find(item.manifest_index);
      if (it == cache_.end()) {
        const auto& entry = index_.manifest->entries[item.manifest_index];
        NormalizedSample sample = load_normalized(index_.manifest->resolve(entry), opts_.tau);
        it = cache_.emplace(item.manifest_index, std::move(sample)).first;
      }
      NormalizedSample prepared = it->second;
      if (opts_.augment) {
        const double factor =
            opts_.speed_factors[rng.uniform_int(opts_.speed_factors.size())];
        prepared = speed_augment(prepared, factor);
      }
      prepared = resample_to_length(prepared, opts_.frames);
      dst.push_back(to_encoder_input(prepared));
      labels.push_back(item.local_label);
    };

    for (const EpisodeItem& item : out.meta.support) {
      load_item(item, out.batch.support, out.batch.support_labels);
    }
    for (const EpisodeItem& item : out.meta.query) {
      load_item(item, out.batch.query, out.batch.query_labels);
    }
    return out;
  } catch (const DataError& e) {
    throw DataError("episode " + std::to_string(episode_index) + ": " + e.what());
  }
}

std::optional<LoadedEpisode> EpisodeStream::next() {
  if (cursor_ >= opts_.num_episodes) return std::nullopt;
  return load(cursor_++);
}

}  // namespace pslr

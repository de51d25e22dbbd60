#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "pslr/model.hpp"
#include "pslr/prototypical.hpp"

namespace pslr {

// Training progress carried inside a checkpoint.
struct TrainingMeta {
  std::int64_t episodes_done = 0;
  double best_val_top1 = -1.0;
  std::string note;
};

// Versioned, self-describing container: JSON header (plan, graph edge lists,
// named array manifest, optimizer/meta state) followed by raw little-endian
// float64 payloads. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelState& model,
                     const AdamState* adam = nullptr, const TrainingMeta* meta = nullptr,
                     const std::vector<std::string>* vocabulary = nullptr);

struct LoadedCheckpoint {
  ModelState model;
  std::optional<AdamState> adam;
  TrainingMeta meta;
  std::vector<std::string> vocabulary;  // present for baseline checkpoints
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pslr

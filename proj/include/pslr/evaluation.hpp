#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pslr/episodic.hpp"
#include "pslr/model.hpp"
#include "pslr/pose_data.hpp"
#include "pslr/prototypical.hpp"

namespace pslr {

struct EvalOptions {
  double tau = 0.3;
  std::size_t frames = 64;
  DistanceMode distance = DistanceMode::squared;
  int threads = 1;
  std::vector<std::size_t> k_list = {1, 5, 10};
};

struct PredictionRecord {
  std::string video_id;
  std::string true_gloss;
  std::vector<std::string> ranked;  // best-first, up to max(k_list)
};

struct ClassAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct EvalReport {
  std::size_t num_queries = 0;
  std::size_t dropped_queries = 0;    // glosses absent from the prototype set
  std::size_t intersection_size = 0;  // cross-dataset runs only
  std::vector<std::pair<std::size_t, double>> top_k;
  std::map<std::string, ClassAccuracy> per_class;
  std::vector<PredictionRecord> records;

  double top(std::size_t k) const;
};

// Prototype per training class = mean embedding over all of its samples
// (augmentation off). Unreadable samples are skipped with a warning; a class
// with no readable sample is an error.
PrototypeDictionary build_global_prototypes(const ModelState& model,
                                            const DatasetManifest& manifest, Split split,
                                            const EvalOptions& opts);

// Rank prototype classes by ascending embedding distance for every query in
// the split; top-k = fraction of queries whose true gloss ranks within k.
EvalReport evaluate_global(const ModelState& model, const PrototypeDictionary& protos,
                           const DatasetManifest& manifest, Split split, const EvalOptions& opts);

// Zero-shot transfer: prototypes from the source split, queries from the
// target split, restricted to the (case-insensitive) gloss intersection.
EvalReport cross_dataset_eval(const ModelState& model, const DatasetManifest& source,
                              Split source_split, const DatasetManifest& target,
                              Split target_split, const EvalOptions& opts);

struct ConfusionPair {
  std::string gloss_a;  // lexicographically first
  std::string gloss_b;
  std::size_t count = 0;
};

// Bidirectional rank-1 confusion counts, sorted by count descending then
// lexicographically, truncated to top_m.
std::vector<ConfusionPair> extract_confused_pairs(const EvalReport& report, std::size_t top_m);

struct PcaResult {
  Mat coords;                       // (M, out_dims)
  std::vector<double> explained;    // variance ratios, non-increasing
};

// Mean-centered projection onto the leading principal directions. Sign
// convention: the largest-magnitude component of each direction is positive.
PcaResult pca_project(const Mat& embeddings, std::size_t out_dims = 2);

// --- report files (comma-separated, fixed headers) ---

void write_metrics_csv(const std::filesystem::path& path, const EvalReport& report);
void write_predictions_csv(const std::filesystem::path& path, const EvalReport& report);
void write_confusions_csv(const std::filesystem::path& path,
                          const std::vector<ConfusionPair>& pairs);
void write_pca_csv(const std::filesystem::path& path, const std::vector<std::string>& video_ids,
                   const std::vector<std::string>& glosses, const PcaResult& pca);
std::string format_report_summary(const EvalReport& report);

}  // namespace pslr

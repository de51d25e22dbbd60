#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pslr/evaluation.hpp"
#include "pslr/model.hpp"
#include "pslr/prototypical.hpp"

namespace pslr {

// Comparison baseline: the identical ST-GCN + MSTA backbone with a linear
// classification head over the training vocabulary, trained by standard
// cross-entropy. The backbone initialization is bit-identical to the
// prototypical path for the same seed; only the head and training loop differ.
struct BaselineModel {
  ModelState backbone;
  std::vector<std::string> vocabulary;  // head column order
  ParamStore::Id head_w;                // (D, V), registered after backbone init
  ParamStore::Id head_b;                // (1, V)

  static BaselineModel create(ModelPlan plan, std::vector<SkeletonGraph> graphs,
                              const std::vector<std::string>& vocabulary, std::uint64_t seed);
};

struct BaselineTrainOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  AdamOptions adam;
  std::uint64_t seed = 1;
  bool augment = true;
  std::vector<double> speed_factors = {0.8, 1.0, 1.25};
  std::size_t frames = 64;
  double tau = 0.3;
  int threads = 1;
  // Called once per epoch with (epoch, mean train loss).
  std::function<void(std::size_t, double)> on_epoch;
};

// Minimizes softmax cross-entropy of z*W + b over the train split.
void train_baseline(BaselineModel& model, const DatasetManifest& manifest,
                    const BaselineTrainOptions& opts);

// Ranks vocabulary classes by descending logit; report format matches
// evaluate_global. Eval samples with glosses outside the vocabulary are
// dropped and counted.
EvalReport baseline_predict(const BaselineModel& model, const DatasetManifest& manifest,
                            Split split, const EvalOptions& opts);

// Zero-shot transfer for the fixed head: target queries restricted to the
// case-insensitive intersection of target glosses and the head vocabulary,
// ranked over the intersection columns only.
EvalReport baseline_cross_predict(const BaselineModel& model, const DatasetManifest& target,
                                  Split target_split, const EvalOptions& opts);

}  // namespace pslr

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pslr/mat.hpp"
#include "pslr/model.hpp"

namespace pslr {

enum class DistanceMode { squared, unsquared };
DistanceMode parse_distance_mode(const std::string& s);
const char* distance_mode_name(DistanceMode m);

struct PrototypeDictionary {
  std::vector<std::string> class_ids;       // gloss strings or local-index names
  Mat prototypes;                           // (N, D)
  std::vector<std::size_t> support_counts;  // per class, >= 1
};

// Per-class mean of support embeddings; every class in [0, N) needs at least
// one support row.
PrototypeDictionary compute_prototypes(const Mat& support, const std::vector<int>& labels,
                                       std::size_t n_classes);

// Row r = log softmax over classes of -d(query_r, prototype_c).
Mat proto_log_probs(const Mat& queries, const Mat& prototypes, DistanceMode mode);

// Mean negative log probability of the true class.
double episode_loss(const Mat& log_probs, const std::vector<int>& labels);

// Loss plus gradients with respect to support and query embeddings (the
// prototype mean couples the support set).
double episode_loss_backward(const Mat& support, const std::vector<int>& support_labels,
                             const Mat& queries, const std::vector<int>& query_labels,
                             std::size_t n_classes, DistanceMode mode, Mat& d_support,
                             Mat& d_queries);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions opts;
  std::vector<double> m, v;
  std::int64_t t = 0;

  explicit AdamState(std::size_t n = 0, AdamOptions o = {}) : opts(o), m(n, 0.0), v(n, 0.0) {}
  void step(std::vector<double>& params, const std::vector<double>& grad);
};

struct EpisodeBatch {
  std::vector<EncoderInput> support;
  std::vector<int> support_labels;
  std::vector<EncoderInput> query;
  std::vector<int> query_labels;
  std::size_t n_classes = 0;
};

struct TrainStepOptions {
  DistanceMode distance = DistanceMode::squared;
  int threads = 1;
};

// One step of the episodic training loop: encode support and query, form
// prototypes, distance softmax, cross-entropy, one Adam update. Returns the
// pre-update loss. Throws NumericError (with max |grad|) on non-finite loss.
double train_episode(ModelState& model, const EpisodeBatch& batch, AdamState& adam,
                     const TrainStepOptions& opts);

}  // namespace pslr

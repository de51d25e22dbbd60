#pragma once

#include <cstdint>
#include <vector>

#include "pslr/aggregator.hpp"
#include "pslr/encoder.hpp"
#include "pslr/graph.hpp"
#include "pslr/params.hpp"

namespace pslr {

// All learnable state of the encoder f_theta and aggregator A_phi plus the
// graph topologies. Copyable by value (finite-difference checks rely on it).
struct ModelState {
  ModelPlan plan;
  std::vector<SkeletonGraph> graphs;
  ParamStore params;
  EncoderLayout enc;
  AggregatorLayout agg;

  static ModelState create(ModelPlan plan, std::vector<SkeletonGraph> graphs, std::uint64_t seed);

  std::size_t embedding_dim() const { return plan.embedding_dim; }
};

struct SampleTrace {
  EncoderTrace enc;
  Mat z_seq;  // encoder output Z, (T, D)
  AggTrace agg;
};

// Sample embedding z = A_phi(f_theta(x)).
void embed(const ModelState& model, const EncoderInput& input, std::vector<double>& z);
void embed_traced(const ModelState& model, const EncoderInput& input, std::vector<double>& z,
                  SampleTrace& trace);
// Accumulates d(loss)/d(params) into grad given d(loss)/dz.
void embed_backward(const ModelState& model, const EncoderInput& input, const SampleTrace& trace,
                    const double* dz, std::vector<double>& grad);

// Embeddings of many samples, (M, D). Read-only over the model; samples are
// assigned to threads in fixed blocks so results do not depend on timing.
Mat embed_batch(const ModelState& model, const std::vector<EncoderInput>& inputs, int threads);

}  // namespace pslr

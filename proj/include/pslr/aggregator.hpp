#pragma once

#include <array>
#include <vector>

#include "pslr/encoder.hpp"
#include "pslr/mat.hpp"
#include "pslr/params.hpp"

namespace pslr {

// Multi-scale temporal aggregation: parallel 1D convolutions with kernel
// sizes {3, 5, 7} merged by projection into a residual over Z, then learnable
// attention pooling down to a single embedding.
inline constexpr std::array<std::size_t, 3> kMstaKernels = {3, 5, 7};

struct AggregatorLayout {
  std::array<ParamStore::Id, 3> conv_w;  // (k*D, D) each, no bias
  ParamStore::Id proj_w;                 // (3D, D)
  ParamStore::Id proj_b;                 // (1, D)
  ParamStore::Id score_w1;               // (D, D/4)
  ParamStore::Id score_b1;               // (1, D/4)
  ParamStore::Id score_w2;               // (D/4, 1)
  ParamStore::Id score_b2;               // (1, 1)
};

AggregatorLayout register_aggregator_params(ParamStore& store, std::size_t embedding_dim,
                                            std::vector<InitRule>& rules);

struct AggTrace {
  Mat z;                    // input (T, D)
  Mat bcat;                 // branch outputs (T, 3D)
  Mat h;                    // (T, D)
  Mat s1, a1;               // scoring hidden pre/post ReLU, (T, D/4)
  std::vector<double> att;  // softmax weights, (T)
};

// H = Z + proj(concat(conv3(Z), conv5(Z), conv7(Z)))
void msta_forward(const ParamStore& store, const AggregatorLayout& layout, const Mat& z, Mat& h,
                  AggTrace* trace);

// z_out = sum_t softmax(score(h_t)) * h_t
void attention_pool(const ParamStore& store, const AggregatorLayout& layout, const Mat& h,
                    std::vector<double>& z_out, AggTrace* trace);

// Both stages in one call.
void aggregator_forward(const ParamStore& store, const AggregatorLayout& layout, const Mat& z,
                        std::vector<double>& z_out, AggTrace* trace);

// dz (D) -> dZ (T, D), accumulating parameter gradients.
void aggregator_backward(const ParamStore& store, const AggregatorLayout& layout,
                         const AggTrace& trace, const double* dz, Mat& dz_seq,
                         std::vector<double>& grad);

}  // namespace pslr

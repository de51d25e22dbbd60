#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pslr/graph.hpp"
#include "pslr/mat.hpp"
#include "pslr/params.hpp"
#include "pslr/pose_data.hpp"

namespace pslr {

// --- block plan ---

struct BlockSpec {
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
};

struct PartitionPlan {
  std::vector<BlockSpec> blocks;
  std::size_t out_channels() const { return blocks.empty() ? 0 : blocks.back().out_ch; }
};

struct ModelPlan {
  std::size_t embedding_dim = 768;  // D
  std::size_t frames = 64;          // fixed training length T
  std::size_t temporal_kernel = 9;  // odd
  std::vector<PartitionPlan> partitions;

  std::size_t fused_channels() const;
  void validate(std::size_t num_partitions) const;
};

// Full-scale plan: four ST-GCN blocks per partition, reduced face widths.
ModelPlan paper_plan();
// Small plan for CPU-scale runs (D = 32 by default).
ModelPlan desk_plan(std::size_t embedding_dim = 32);

// --- parameters ---

enum class InitKind { trunc_normal, ones, zeros };

struct InitRule {
  ParamStore::Id id;
  InitKind kind;
};

struct BlockParams {
  ParamStore::Id w_spatial;   // (Cin, Cout)
  ParamStore::Id norm_scale;  // (1, Cout)
  ParamStore::Id norm_shift;  // (1, Cout)
  ParamStore::Id w_temporal;  // (K*Cout, Cout), tap-major
  std::optional<ParamStore::Id> w_res;  // (Cin, Cout) when Cin != Cout
};

struct EncoderLayout {
  std::vector<std::vector<BlockParams>> partitions;
  ParamStore::Id fuse_w;  // (fused_channels, D)
  ParamStore::Id fuse_b;  // (1, D)
};

EncoderLayout register_encoder_params(ParamStore& store, const ModelPlan& plan,
                                      const std::vector<SkeletonGraph>& graphs,
                                      std::vector<InitRule>& rules);

// Truncated normal (mean 0, std 0.02, clipped at 2 std) for weights, 1 for
// normalization scales, 0 for shifts and biases. Deterministic given seed.
void init_params(ParamStore& store, const std::vector<InitRule>& rules, std::uint64_t seed);

// --- forward / backward ---

struct PartitionInput {
  std::size_t frames = 0;  // T
  std::size_t joints = 0;  // J
  Mat coords;              // (T*J, 2)
  std::vector<double> mask;  // T*J, 0 or 1
};

using EncoderInput = std::vector<PartitionInput>;

EncoderInput to_encoder_input(const NormalizedSample& sample);

struct BlockTrace {
  Mat x;     // block input after mask zeroing, (T*J, Cin)
  Mat g;     // A_hat * x, (T*J, Cin)
  Mat xhat;  // normalized pre-affine, (T*J, Cout)
  Mat y;     // scale*xhat + shift, (T*J, Cout)
  Mat r;     // relu(y)
  std::vector<double> sigma;  // per-channel sqrt(var + eps)
};

struct PartitionTrace {
  std::vector<BlockTrace> blocks;
  Mat out;                         // final block output, (T*J, C_last)
  std::vector<double> inv_valid;   // per frame 1/#valid joints, 0 if none
};

struct EncoderTrace {
  std::vector<PartitionTrace> partitions;
  Mat fcat;  // concatenated pooled features, (T, fused_channels)
};

// Z = concat over partitions of mask-aware joint-pooled ST-GCN features,
// fused by linear projection; shape (T, D). Pass trace to enable backward.
void encoder_forward(const ParamStore& store, const EncoderLayout& layout, const ModelPlan& plan,
                     const std::vector<SkeletonGraph>& graphs, const EncoderInput& input, Mat& z,
                     EncoderTrace* trace);

void encoder_backward(const ParamStore& store, const EncoderLayout& layout, const ModelPlan& plan,
                      const std::vector<SkeletonGraph>& graphs, const EncoderInput& input,
                      const EncoderTrace& trace, const Mat& dz, std::vector<double>& grad);

// Temporal convolution along frames with symmetric zero padding; rows_per_frame
// consecutive rows form one frame. Shared by encoder blocks and the MSTA
// branches. Y is accumulated into (callers zero it first).
void tconv_forward(std::size_t frames, std::size_t rows_per_frame, std::size_t channels,
                   std::size_t kernel, const double* x, std::size_t ldx, ConstMatView w, double* y,
                   std::size_t ldy);

void tconv_backward(std::size_t frames, std::size_t rows_per_frame, std::size_t channels,
                    std::size_t kernel, const double* x, std::size_t ldx, ConstMatView w,
                    const double* dy, std::size_t ldy, double* dx, std::size_t ldx2, MatView dw);

}  // namespace pslr

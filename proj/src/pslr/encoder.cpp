#include "pslr/encoder.hpp"

#include <cmath>
#include <string>

#include "pslr/errors.hpp"
#include "pslr/kernels.hpp"
#include "pslr/rng.hpp"

namespace pslr {

namespace {
constexpr double kNormEps = 1e-5;
}

std::size_t ModelPlan::fused_channels() const {
  std::size_t total = 0;
  for (const auto& p : partitions) total += p.out_channels();
  return total;
}

void ModelPlan::validate(std::size_t num_partitions) const {
  if (partitions.size() != num_partitions) {
    throw ConfigError("model plan covers " + std::to_string(partitions.size()) +
                      " partitions, expected " + std::to_string(num_partitions));
  }
  if (embedding_dim == 0 || embedding_dim % 4 != 0) {
    throw ConfigError("embedding_dim must be a positive multiple of 4, got " +
                      std::to_string(embedding_dim));
  }
  if (temporal_kernel % 2 == 0 || temporal_kernel == 0) {
    throw ConfigError("temporal_kernel must be odd, got " + std::to_string(temporal_kernel));
  }
  if (frames < 2) throw ConfigError("frames must be >= 2");
  for (const auto& p : partitions) {
    if (p.blocks.empty()) throw ConfigError("every partition needs at least one block");
    if (p.blocks.front().in_ch != 2) throw ConfigError("first block must take 2 input channels");
    for (std::size_t b = 1; b < p.blocks.size(); ++b) {
      if (p.blocks[b].in_ch != p.blocks[b - 1].out_ch) {
        throw ConfigError("block channel chain is inconsistent");
      }
    }
  }
}

ModelPlan paper_plan() {
  ModelPlan plan;
  plan.embedding_dim = 768;
  plan.frames = 64;
  plan.temporal_kernel = 9;
  const PartitionPlan limb{{{2, 64}, {64, 64}, {64, 128}, {128, 256}}};
  const PartitionPlan face{{{2, 32}, {32, 32}, {32, 64}, {64, 128}}};
  plan.partitions = {limb, limb, limb, face};
  return plan;
}

ModelPlan desk_plan(std::size_t embedding_dim) {
  ModelPlan plan;
  plan.embedding_dim = embedding_dim;
  plan.frames = 64;
  plan.temporal_kernel = 5;
  const PartitionPlan limb{{{2, 16}, {16, 32}}};
  const PartitionPlan face{{{2, 8}, {8, 16}}};
  plan.partitions = {limb, limb, limb, face};
  return plan;
}

EncoderLayout register_encoder_params(ParamStore& store, const ModelPlan& plan,
                                      const std::vector<SkeletonGraph>& graphs,
                                      std::vector<InitRule>& rules) {
  plan.validate(graphs.size());
  EncoderLayout layout;
  for (std::size_t p = 0; p < plan.partitions.size(); ++p) {
    const std::string prefix = "enc." + graphs[p].partition_name + ".b";
    std::vector<BlockParams> blocks;
    for (std::size_t b = 0; b < plan.partitions[p].blocks.size(); ++b) {
      const auto& bs = plan.partitions[p].blocks[b];
      const std::string base = prefix + std::to_string(b);
      BlockParams bp;
      bp.w_spatial = store.add(base + ".w_spatial", bs.in_ch, bs.out_ch);
      rules.push_back({bp.w_spatial, InitKind::trunc_normal});
      bp.norm_scale = store.add(base + ".norm_scale", 1, bs.out_ch);
      rules.push_back({bp.norm_scale, InitKind::ones});
      bp.norm_shift = store.add(base + ".norm_shift", 1, bs.out_ch);
      rules.push_back({bp.norm_shift, InitKind::zeros});
      bp.w_temporal = store.add(base + ".w_temporal", plan.temporal_kernel * bs.out_ch, bs.out_ch);
      rules.push_back({bp.w_temporal, InitKind::trunc_normal});
      if (bs.in_ch != bs.out_ch) {
        bp.w_res = store.add(base + ".w_res", bs.in_ch, bs.out_ch);
        rules.push_back({*bp.w_res, InitKind::trunc_normal});
      }
      blocks.push_back(bp);
    }
    layout.partitions.push_back(std::move(blocks));
  }
  layout.fuse_w = store.add("fuse.w", plan.fused_channels(), plan.embedding_dim);
  rules.push_back({layout.fuse_w, InitKind::trunc_normal});
  layout.fuse_b = store.add("fuse.b", 1, plan.embedding_dim);
  rules.push_back({layout.fuse_b, InitKind::zeros});
  return layout;
}

void init_params(ParamStore& store, const std::vector<InitRule>& rules, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  for (const InitRule& rule : rules) {
    MatView v = store.view(rule.id);
    switch (rule.kind) {
      case InitKind::trunc_normal:
        for (std::size_t i = 0; i < v.size(); ++i) v.ptr[i] = rng.truncated_normal(0.02, 2.0);
        break;
      case InitKind::ones:
        for (std::size_t i = 0; i < v.size(); ++i) v.ptr[i] = 1.0;
        break;
      case InitKind::zeros:
        for (std::size_t i = 0; i < v.size(); ++i) v.ptr[i] = 0.0;
        break;
    }
  }
}

EncoderInput to_encoder_input(const NormalizedSample& sample) {
  EncoderInput input(kNumPartitions);
  for (std::size_t p = 0; p < kNumPartitions; ++p) {
    const PartitionBlock& block = sample.parts[p];
    PartitionInput& pi = input[p];
    pi.frames = sample.num_frames;
    pi.joints = block.joints;
    pi.coords.resize(sample.num_frames * block.joints, 2);
    pi.mask.resize(sample.num_frames * block.joints);
    for (std::size_t r = 0; r < pi.mask.size(); ++r) {
      pi.coords(r, 0) = block.coords[r * 2 + 0];
      pi.coords(r, 1) = block.coords[r * 2 + 1];
      pi.mask[r] = block.mask[r];
    }
  }
  return input;
}

void tconv_forward(std::size_t frames, std::size_t rows_per_frame, std::size_t channels,
                   std::size_t kernel, const double* x, std::size_t ldx, ConstMatView w, double* y,
                   std::size_t ldy) {
  const auto& ops = kern::active();
  const std::ptrdiff_t radius = static_cast<std::ptrdiff_t>(kernel / 2);
  const std::ptrdiff_t T = static_cast<std::ptrdiff_t>(frames);
  for (std::size_t d = 0; d < kernel; ++d) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(d) - radius;
    const std::ptrdiff_t t_lo = std::max<std::ptrdiff_t>(0, -off);
    const std::ptrdiff_t t_hi = std::min<std::ptrdiff_t>(T, T - off);
    if (t_lo >= t_hi) continue;
    const std::size_t rows = static_cast<std::size_t>(t_hi - t_lo) * rows_per_frame;
    const double* x_block = x + static_cast<std::size_t>(t_lo + off) * rows_per_frame * ldx;
    const double* w_tap = w.ptr + d * channels * w.cols;
    double* y_block = y + static_cast<std::size_t>(t_lo) * rows_per_frame * ldy;
    ops.gemm_nn(rows, channels, channels, 1.0, x_block, ldx, w_tap, w.cols, 1.0, y_block, ldy);
  }
}

void tconv_backward(std::size_t frames, std::size_t rows_per_frame, std::size_t channels,
                    std::size_t kernel, const double* x, std::size_t ldx, ConstMatView w,
                    const double* dy, std::size_t ldy, double* dx, std::size_t ldx2, MatView dw) {
  const auto& ops = kern::active();
  const std::ptrdiff_t radius = static_cast<std::ptrdiff_t>(kernel / 2);
  const std::ptrdiff_t T = static_cast<std::ptrdiff_t>(frames);
  for (std::size_t d = 0; d < kernel; ++d) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(d) - radius;
    const std::ptrdiff_t t_lo = std::max<std::ptrdiff_t>(0, -off);
    const std::ptrdiff_t t_hi = std::min<std::ptrdiff_t>(T, T - off);
    if (t_lo >= t_hi) continue;
    const std::size_t rows = static_cast<std::size_t>(t_hi - t_lo) * rows_per_frame;
    const double* x_block = x + static_cast<std::size_t>(t_lo + off) * rows_per_frame * ldx;
    const double* dy_block = dy + static_cast<std::size_t>(t_lo) * rows_per_frame * ldy;
    const double* w_tap = w.ptr + d * channels * w.cols;
    double* dw_tap = dw.ptr + d * channels * dw.cols;
    double* dx_block = dx + static_cast<std::size_t>(t_lo + off) * rows_per_frame * ldx2;
    // dX[t+off] += dY[t] * W_d^T ; dW_d += X[t+off]^T * dY[t]
    ops.gemm_nt(rows, channels, channels, 1.0, dy_block, ldy, w_tap, w.cols, 1.0, dx_block, ldx2);
    ops.gemm_tn(channels, channels, rows, 1.0, x_block, ldx, dy_block, ldy, 1.0, dw_tap, dw.cols);
  }
}

namespace {

void check_input(const ModelPlan& plan, const std::vector<SkeletonGraph>& graphs,
                 const EncoderInput& input) {
  if (input.size() != graphs.size()) {
    throw DataError("encoder input has " + std::to_string(input.size()) + " partitions, expected " +
                    std::to_string(graphs.size()));
  }
  for (std::size_t p = 0; p < input.size(); ++p) {
    if (input[p].joints != graphs[p].num_joints) {
      throw DataError("partition '" + graphs[p].partition_name + "' input has " +
                      std::to_string(input[p].joints) + " joints, graph has " +
                      std::to_string(graphs[p].num_joints));
    }
    if (input[p].frames != input[0].frames) {
      throw DataError("partition frame counts disagree");
    }
    if (input[p].coords.rows() != input[p].frames * input[p].joints ||
        input[p].mask.size() != input[p].frames * input[p].joints) {
      throw DataError("partition '" + graphs[p].partition_name + "' storage is malformed");
    }
  }
  (void)plan;
}

void zero_masked_rows(Mat& x, const std::vector<double>& mask) {
  const std::size_t c = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (mask[r] == 0.0) {
      double* row = x.row(r);
      for (std::size_t j = 0; j < c; ++j) row[j] = 0.0;
    }
  }
}

// Pooled (T, C) features of one partition; fills trace when given.
void partition_forward(const ParamStore& store, const std::vector<BlockParams>& blocks,
                       const PartitionPlan& plan, const SkeletonGraph& graph,
                       const PartitionInput& input, std::size_t kernel, Mat& pooled,
                       PartitionTrace* trace) {
  const auto& ops = kern::active();
  const std::size_t T = input.frames;
  const std::size_t J = input.joints;

  Mat current = input.coords;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const BlockSpec& bs = plan.blocks[b];
    const std::size_t cin = bs.in_ch;
    const std::size_t cout = bs.out_ch;

    BlockTrace local;
    BlockTrace& bt = trace ? trace->blocks.emplace_back() : local;

    bt.x = std::move(current);
    zero_masked_rows(bt.x, input.mask);

    // G = A_hat * X, per frame
    bt.g.resize(T * J, cin);
    ConstMatView a{graph.adjacency.data(), J, J};
    for (std::size_t t = 0; t < T; ++t) {
      ops.gemm_nn(J, cin, J, 1.0, a.ptr, J, bt.x.row(t * J), cin, 0.0, bt.g.row(t * J), cin);
    }

    // S = G * W_spatial
    Mat s(T * J, cout);
    ConstMatView w = store.view(blocks[b].w_spatial);
    ops.gemm_nn(T * J, cout, cin, 1.0, bt.g.data(), cin, w.ptr, cout, 0.0, s.data(), cout);

    // Per-channel normalization over the whole (T*J) extent of this sample.
    const std::size_t rows = T * J;
    std::vector<double> mean(cout, 0.0), var(cout, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* srow = s.row(r);
      for (std::size_t c = 0; c < cout; ++c) mean[c] += srow[c];
    }
    for (std::size_t c = 0; c < cout; ++c) mean[c] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* srow = s.row(r);
      for (std::size_t c = 0; c < cout; ++c) {
        const double d = srow[c] - mean[c];
        var[c] += d * d;
      }
    }
    bt.sigma.resize(cout);
    for (std::size_t c = 0; c < cout; ++c) {
      bt.sigma[c] = std::sqrt(var[c] / static_cast<double>(rows) + kNormEps);
    }

    ConstMatView scale = store.view(blocks[b].norm_scale);
    ConstMatView shift = store.view(blocks[b].norm_shift);
    bt.xhat.resize(rows, cout);
    bt.y.resize(rows, cout);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* srow = s.row(r);
      double* xh = bt.xhat.row(r);
      double* yr = bt.y.row(r);
      for (std::size_t c = 0; c < cout; ++c) {
        xh[c] = (srow[c] - mean[c]) / bt.sigma[c];
        yr[c] = scale.ptr[c] * xh[c] + shift.ptr[c];
      }
    }

    bt.r.resize(rows, cout);
    ops.relu(rows * cout, bt.y.data(), bt.r.data());

    // Temporal conv + residual
    Mat out(rows, cout);
    ConstMatView wt = store.view(blocks[b].w_temporal);
    tconv_forward(T, J, cout, kernel, bt.r.data(), cout, wt, out.data(), cout);
    if (blocks[b].w_res) {
      ConstMatView wr = store.view(*blocks[b].w_res);
      ops.gemm_nn(rows, cout, cin, 1.0, bt.x.data(), cin, wr.ptr, cout, 1.0, out.data(), cout);
    } else {
      ops.axpy(rows * cout, 1.0, bt.x.data(), out.data());
    }
    current = std::move(out);
  }

  // Mask-aware mean pool over joints.
  const std::size_t c_last = plan.out_channels();
  pooled.resize(T, c_last);
  std::vector<double> inv_valid(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double count = 0.0;
    for (std::size_t j = 0; j < J; ++j) count += input.mask[t * J + j];
    if (count > 0.0) {
      inv_valid[t] = 1.0 / count;
      double* prow = pooled.row(t);
      for (std::size_t j = 0; j < J; ++j) {
        if (input.mask[t * J + j] != 0.0) {
          ops.axpy(c_last, inv_valid[t], current.row(t * J + j), prow);
        }
      }
    }
  }
  if (trace) {
    trace->out = std::move(current);
    trace->inv_valid = std::move(inv_valid);
  }
}

void partition_backward(const ParamStore& store, const std::vector<BlockParams>& blocks,
                        const PartitionPlan& plan, const SkeletonGraph& graph,
                        const PartitionInput& input, const PartitionTrace& trace,
                        std::size_t kernel, const Mat& d_pooled, std::vector<double>& grad) {
  const auto& ops = kern::active();
  const std::size_t T = input.frames;
  const std::size_t J = input.joints;
  const std::size_t rows = T * J;

  // Un-pool: valid joints share the frame gradient equally.
  Mat dcur(rows, plan.out_channels());
  for (std::size_t t = 0; t < T; ++t) {
    if (trace.inv_valid[t] == 0.0) continue;
    const double* drow = d_pooled.row(t);
    for (std::size_t j = 0; j < J; ++j) {
      if (input.mask[t * J + j] != 0.0) {
        ops.axpy(plan.out_channels(), trace.inv_valid[t], drow, dcur.row(t * J + j));
      }
    }
  }

  for (std::size_t b = blocks.size(); b-- > 0;) {
    const BlockSpec& bs = plan.blocks[b];
    const std::size_t cin = bs.in_ch;
    const std::size_t cout = bs.out_ch;
    const BlockTrace& bt = trace.blocks[b];

    Mat dx_input(rows, cin);

    // Residual path
    if (blocks[b].w_res) {
      ConstMatView wr = store.view(*blocks[b].w_res);
      MatView dwr = store.view_in(grad, *blocks[b].w_res);
      ops.gemm_tn(cin, cout, rows, 1.0, bt.x.data(), cin, dcur.data(), cout, 1.0, dwr.ptr, cout);
      ops.gemm_nt(rows, cin, cout, 1.0, dcur.data(), cout, wr.ptr, cout, 1.0, dx_input.data(),
                  cin);
    } else {
      ops.axpy(rows * cout, 1.0, dcur.data(), dx_input.data());
    }

    // Temporal conv backward
    Mat dr(rows, cout);
    ConstMatView wt = store.view(blocks[b].w_temporal);
    MatView dwt = store.view_in(grad, blocks[b].w_temporal);
    tconv_backward(T, J, cout, kernel, bt.r.data(), cout, wt, dcur.data(), cout, dr.data(), cout,
                   dwt);

    // ReLU
    Mat dy(rows, cout);
    ops.relu_grad(rows * cout, bt.y.data(), dr.data(), dy.data());

    // Normalization backward
    ConstMatView scale = store.view(blocks[b].norm_scale);
    MatView dscale = store.view_in(grad, blocks[b].norm_scale);
    MatView dshift = store.view_in(grad, blocks[b].norm_shift);
    std::vector<double> m1(cout, 0.0), m2(cout, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dyr = dy.row(r);
      const double* xh = bt.xhat.row(r);
      for (std::size_t c = 0; c < cout; ++c) {
        dscale.ptr[c] += dyr[c] * xh[c];
        dshift.ptr[c] += dyr[c];
        const double dxh = dyr[c] * scale.ptr[c];
        m1[c] += dxh;
        m2[c] += dxh * xh[c];
      }
    }
    for (std::size_t c = 0; c < cout; ++c) {
      m1[c] /= static_cast<double>(rows);
      m2[c] /= static_cast<double>(rows);
    }
    Mat ds(rows, cout);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dyr = dy.row(r);
      const double* xh = bt.xhat.row(r);
      double* dsr = ds.row(r);
      for (std::size_t c = 0; c < cout; ++c) {
        const double dxh = dyr[c] * scale.ptr[c];
        dsr[c] = (dxh - m1[c] - xh[c] * m2[c]) / bt.sigma[c];
      }
    }

    // Spatial backward
    ConstMatView w = store.view(blocks[b].w_spatial);
    MatView dws = store.view_in(grad, blocks[b].w_spatial);
    ops.gemm_tn(cin, cout, rows, 1.0, bt.g.data(), cin, ds.data(), cout, 1.0, dws.ptr, cout);
    Mat dg(rows, cin);
    ops.gemm_nt(rows, cin, cout, 1.0, ds.data(), cout, w.ptr, cout, 0.0, dg.data(), cin);
    ConstMatView a{graph.adjacency.data(), J, J};
    for (std::size_t t = 0; t < T; ++t) {
      // A_hat is symmetric.
      ops.gemm_nn(J, cin, J, 1.0, a.ptr, J, dg.row(t * J), cin, 1.0, dx_input.row(t * J), cin);
    }

    zero_masked_rows(dx_input, input.mask);
    dcur = std::move(dx_input);
  }
}

}  // namespace

void encoder_forward(const ParamStore& store, const EncoderLayout& layout, const ModelPlan& plan,
                     const std::vector<SkeletonGraph>& graphs, const EncoderInput& input, Mat& z,
                     EncoderTrace* trace) {
  check_input(plan, graphs, input);
  const auto& ops = kern::active();
  const std::size_t T = input[0].frames;
  const std::size_t fused = plan.fused_channels();
  if (trace) trace->partitions.clear();

  Mat fcat(T, fused);
  std::size_t col = 0;
  for (std::size_t p = 0; p < graphs.size(); ++p) {
    PartitionTrace* pt = nullptr;
    if (trace) pt = &trace->partitions.emplace_back();
    Mat pooled;
    partition_forward(store, layout.partitions[p], plan.partitions[p], graphs[p], input[p],
                      plan.temporal_kernel, pooled, pt);
    for (std::size_t t = 0; t < T; ++t) {
      std::copy(pooled.row(t), pooled.row(t) + pooled.cols(), fcat.row(t) + col);
    }
    col += pooled.cols();
  }

  ConstMatView w = store.view(layout.fuse_w);
  ConstMatView b = store.view(layout.fuse_b);
  z.resize(T, plan.embedding_dim);
  for (std::size_t t = 0; t < T; ++t) {
    std::copy(b.ptr, b.ptr + plan.embedding_dim, z.row(t));
  }
  ops.gemm_nn(T, plan.embedding_dim, fused, 1.0, fcat.data(), fused, w.ptr, plan.embedding_dim,
              1.0, z.data(), plan.embedding_dim);
  if (trace) trace->fcat = std::move(fcat);
}

void encoder_backward(const ParamStore& store, const EncoderLayout& layout, const ModelPlan& plan,
                      const std::vector<SkeletonGraph>& graphs, const EncoderInput& input,
                      const EncoderTrace& trace, const Mat& dz, std::vector<double>& grad) {
  const auto& ops = kern::active();
  const std::size_t T = input[0].frames;
  const std::size_t fused = plan.fused_channels();
  const std::size_t d = plan.embedding_dim;

  MatView dw = store.view_in(grad, layout.fuse_w);
  MatView db = store.view_in(grad, layout.fuse_b);
  ops.gemm_tn(fused, d, T, 1.0, trace.fcat.data(), fused, dz.data(), d, 1.0, dw.ptr, d);
  for (std::size_t t = 0; t < T; ++t) {
    ops.axpy(d, 1.0, dz.row(t), db.ptr);
  }
  Mat dfcat(T, fused);
  ConstMatView w = store.view(layout.fuse_w);
  ops.gemm_nt(T, fused, d, 1.0, dz.data(), d, w.ptr, d, 0.0, dfcat.data(), fused);

  std::size_t col = 0;
  for (std::size_t p = 0; p < graphs.size(); ++p) {
    const std::size_t cp = plan.partitions[p].out_channels();
    Mat d_pooled(T, cp);
    for (std::size_t t = 0; t < T; ++t) {
      std::copy(dfcat.row(t) + col, dfcat.row(t) + col + cp, d_pooled.row(t));
    }
    partition_backward(store, layout.partitions[p], plan.partitions[p], graphs[p], input[p],
                       trace.partitions[p], plan.temporal_kernel, d_pooled, grad);
    col += cp;
  }
}

}  // namespace pslr

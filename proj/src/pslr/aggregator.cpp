#include "pslr/aggregator.hpp"

#include <algorithm>
#include <cmath>

#include "pslr/errors.hpp"
#include "pslr/kernels.hpp"

namespace pslr {

AggregatorLayout register_aggregator_params(ParamStore& store, std::size_t d,
                                            std::vector<InitRule>& rules) {
  if (d % 4 != 0) throw ConfigError("embedding_dim must be divisible by 4");
  AggregatorLayout layout;
  for (std::size_t i = 0; i < kMstaKernels.size(); ++i) {
    layout.conv_w[i] = store.add("msta.conv" + std::to_string(kMstaKernels[i]) + ".w",
                                 kMstaKernels[i] * d, d);
    rules.push_back({layout.conv_w[i], InitKind::trunc_normal});
  }
  layout.proj_w = store.add("msta.proj.w", 3 * d, d);
  rules.push_back({layout.proj_w, InitKind::trunc_normal});
  layout.proj_b = store.add("msta.proj.b", 1, d);
  rules.push_back({layout.proj_b, InitKind::zeros});
  layout.score_w1 = store.add("pool.score_w1", d, d / 4);
  rules.push_back({layout.score_w1, InitKind::trunc_normal});
  layout.score_b1 = store.add("pool.score_b1", 1, d / 4);
  rules.push_back({layout.score_b1, InitKind::zeros});
  layout.score_w2 = store.add("pool.score_w2", d / 4, 1);
  rules.push_back({layout.score_w2, InitKind::trunc_normal});
  layout.score_b2 = store.add("pool.score_b2", 1, 1);
  rules.push_back({layout.score_b2, InitKind::zeros});
  return layout;
}

void msta_forward(const ParamStore& store, const AggregatorLayout& layout, const Mat& z, Mat& h,
                  AggTrace* trace) {
  const auto& ops = kern::active();
  const std::size_t T = z.rows();
  const std::size_t d = z.cols();
  if (T < 1) throw DataError("msta_forward: empty sequence");

  Mat bcat(T, 3 * d);
  for (std::size_t i = 0; i < kMstaKernels.size(); ++i) {
    ConstMatView w = store.view(layout.conv_w[i]);
    tconv_forward(T, 1, d, kMstaKernels[i], z.data(), d, w, bcat.data() + i * d, 3 * d);
  }

  ConstMatView pw = store.view(layout.proj_w);
  ConstMatView pb = store.view(layout.proj_b);
  h.resize(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    const double* zr = z.row(t);
    double* hr = h.row(t);
    for (std::size_t c = 0; c < d; ++c) hr[c] = zr[c] + pb.ptr[c];
  }
  ops.gemm_nn(T, d, 3 * d, 1.0, bcat.data(), 3 * d, pw.ptr, d, 1.0, h.data(), d);

  if (trace) {
    trace->z = z;
    trace->bcat = std::move(bcat);
    trace->h = h;
  }
}

void attention_pool(const ParamStore& store, const AggregatorLayout& layout, const Mat& h,
                    std::vector<double>& z_out, AggTrace* trace) {
  const auto& ops = kern::active();
  const std::size_t T = h.rows();
  const std::size_t d = h.cols();
  const std::size_t dh = d / 4;
  if (T < 1) throw DataError("attention_pool: empty sequence");

  Mat s1(T, dh);
  ConstMatView w1 = store.view(layout.score_w1);
  ConstMatView b1 = store.view(layout.score_b1);
  for (std::size_t t = 0; t < T; ++t) {
    std::copy(b1.ptr, b1.ptr + dh, s1.row(t));
  }
  ops.gemm_nn(T, dh, d, 1.0, h.data(), d, w1.ptr, dh, 1.0, s1.data(), dh);
  Mat a1(T, dh);
  ops.relu(T * dh, s1.data(), a1.data());

  ConstMatView w2 = store.view(layout.score_w2);
  ConstMatView b2 = store.view(layout.score_b2);
  std::vector<double> alpha(T);
  for (std::size_t t = 0; t < T; ++t) {
    alpha[t] = ops.dot(dh, a1.row(t), w2.ptr) + b2.ptr[0];
  }

  // Max-subtracted softmax over time.
  const double amax = *std::max_element(alpha.begin(), alpha.end());
  std::vector<double> att(T);
  double denom = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    att[t] = std::exp(alpha[t] - amax);
    denom += att[t];
  }
  for (std::size_t t = 0; t < T; ++t) att[t] /= denom;

  z_out.assign(d, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    ops.axpy(d, att[t], h.row(t), z_out.data());
  }

  if (trace) {
    trace->s1 = std::move(s1);
    trace->a1 = std::move(a1);
    trace->att = std::move(att);
  }
}

void aggregator_forward(const ParamStore& store, const AggregatorLayout& layout, const Mat& z,
                        std::vector<double>& z_out, AggTrace* trace) {
  Mat h;
  msta_forward(store, layout, z, h, trace);
  attention_pool(store, layout, h, z_out, trace);
}

void aggregator_backward(const ParamStore& store, const AggregatorLayout& layout,
                         const AggTrace& trace, const double* dz, Mat& dz_seq,
                         std::vector<double>& grad) {
  const auto& ops = kern::active();
  const std::size_t T = trace.h.rows();
  const std::size_t d = trace.h.cols();
  const std::size_t dh = d / 4;

  // Pooling backward: z = sum_t att_t h_t with att = softmax(alpha).
  Mat dhm(T, d);
  std::vector<double> dalpha(T);
  double weighted = 0.0;
  std::vector<double> dots(T);
  for (std::size_t t = 0; t < T; ++t) {
    dots[t] = ops.dot(d, dz, trace.h.row(t));
    weighted += trace.att[t] * dots[t];
    ops.axpy(d, trace.att[t], dz, dhm.row(t));
  }
  for (std::size_t t = 0; t < T; ++t) {
    dalpha[t] = trace.att[t] * (dots[t] - weighted);
  }

  // Scoring network backward.
  MatView db2 = store.view_in(grad, layout.score_b2);
  MatView dw2 = store.view_in(grad, layout.score_w2);
  for (std::size_t t = 0; t < T; ++t) db2.ptr[0] += dalpha[t];
  ops.gemm_tn(dh, 1, T, 1.0, trace.a1.data(), dh, dalpha.data(), 1, 1.0, dw2.ptr, 1);
  Mat da1(T, dh);
  ConstMatView w2 = store.view(layout.score_w2);
  ops.gemm_nt(T, dh, 1, 1.0, dalpha.data(), 1, w2.ptr, 1, 0.0, da1.data(), dh);
  Mat ds1(T, dh);
  ops.relu_grad(T * dh, trace.s1.data(), da1.data(), ds1.data());
  MatView dw1 = store.view_in(grad, layout.score_w1);
  MatView db1 = store.view_in(grad, layout.score_b1);
  ops.gemm_tn(d, dh, T, 1.0, trace.h.data(), d, ds1.data(), dh, 1.0, dw1.ptr, dh);
  for (std::size_t t = 0; t < T; ++t) ops.axpy(dh, 1.0, ds1.row(t), db1.ptr);
  ConstMatView w1 = store.view(layout.score_w1);
  ops.gemm_nt(T, d, dh, 1.0, ds1.data(), dh, w1.ptr, dh, 1.0, dhm.data(), d);

  // MSTA backward: H = Z + proj(Bcat).
  dz_seq.resize(T, d);
  ops.axpy(T * d, 1.0, dhm.data(), dz_seq.data());  // residual path

  MatView dpw = store.view_in(grad, layout.proj_w);
  MatView dpb = store.view_in(grad, layout.proj_b);
  ops.gemm_tn(3 * d, d, T, 1.0, trace.bcat.data(), 3 * d, dhm.data(), d, 1.0, dpw.ptr, d);
  for (std::size_t t = 0; t < T; ++t) ops.axpy(d, 1.0, dhm.row(t), dpb.ptr);
  Mat dbcat(T, 3 * d);
  ConstMatView pw = store.view(layout.proj_w);
  ops.gemm_nt(T, 3 * d, d, 1.0, dhm.data(), d, pw.ptr, d, 0.0, dbcat.data(), 3 * d);

  for (std::size_t i = 0; i < kMstaKernels.size(); ++i) {
    ConstMatView w = store.view(layout.conv_w[i]);
    MatView dw = store.view_in(grad, layout.conv_w[i]);
    tconv_backward(T, 1, d, kMstaKernels[i], trace.z.data(), d, w, dbcat.data() + i * d, 3 * d,
                   dz_seq.data(), d, dw);
  }
}

}  // namespace pslr

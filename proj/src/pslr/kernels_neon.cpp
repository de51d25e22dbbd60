// NEON variants for arm64 (2 doubles per vector). Mirrors the AVX2 file.

#include <arm_neon.h>

#include <cmath>
#include <cstring>

#include "pslr/kernels.hpp"

namespace pslr::kern {

namespace {

inline void scale_row(double* c, std::size_t n, double beta) {
  if (beta == 0.0) {
    std::memset(c, 0, n * sizeof(double));
  } else if (beta != 1.0) {
    for (std::size_t j = 0; j < n; ++j) c[j] *= beta;
  }
}

void n_gemm_nn(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* A,
               std::size_t lda, const double* B, std::size_t ldb, double beta, double* C,
               std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * ldc;
    scale_row(crow, n, beta);
    const double* arow = A + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = alpha * arow[p];
      if (a == 0.0) continue;
      const double* brow = B + p * ldb;
      const float64x2_t av = vdupq_n_f64(a);
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        float64x2_t c0 = vld1q_f64(crow + j);
        float64x2_t c1 = vld1q_f64(crow + j + 2);
        c0 = vfmaq_f64(c0, av, vld1q_f64(brow + j));
        c1 = vfmaq_f64(c1, av, vld1q_f64(brow + j + 2));
        vst1q_f64(crow + j, c0);
        vst1q_f64(crow + j + 2, c1);
      }
      for (; j + 2 <= n; j += 2) {
        float64x2_t c0 = vld1q_f64(crow + j);
        c0 = vfmaq_f64(c0, av, vld1q_f64(brow + j));
        vst1q_f64(crow + j, c0);
      }
      for (; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

inline double dot_impl(std::size_t n, const double* x, const double* y) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  for (; i + 2 <= n; i += 2) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void n_gemm_nt(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* A,
               std::size_t lda, const double* B, std::size_t ldb, double beta, double* C,
               std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A + i * lda;
    double* crow = C + i * ldc;
    for (std::size_t j = 0; j < n; ++j) {
      const double acc = dot_impl(k, arow, B + j * ldb);
      crow[j] = (beta == 0.0 ? 0.0 : beta * crow[j]) + alpha * acc;
    }
  }
}

void n_gemm_tn(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* A,
               std::size_t lda, const double* B, std::size_t ldb, double beta, double* C,
               std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) scale_row(C + i * ldc, n, beta);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = A + p * lda;
    const double* brow = B + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      const double a = alpha * arow[i];
      if (a == 0.0) continue;
      double* crow = C + i * ldc;
      const float64x2_t av = vdupq_n_f64(a);
      std::size_t j = 0;
      for (; j + 2 <= n; j += 2) {
        float64x2_t c0 = vld1q_f64(crow + j);
        c0 = vfmaq_f64(c0, av, vld1q_f64(brow + j));
        vst1q_f64(crow + j, c0);
      }
      for (; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

void n_axpy(std::size_t n, double a, const double* x, double* y) {
  const float64x2_t av = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t yv = vld1q_f64(y + i);
    yv = vfmaq_f64(yv, av, vld1q_f64(x + i));
    vst1q_f64(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double n_dot(std::size_t n, const double* x, const double* y) { return dot_impl(n, x, y); }

void n_relu(std::size_t n, const double* x, double* y) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vmaxq_f64(vld1q_f64(x + i), zero));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void n_relu_grad(std::size_t n, const double* pre, const double* dy, double* dx) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const uint64x2_t mask = vcgtq_f64(vld1q_f64(pre + i), zero);
    const float64x2_t gated =
        vreinterpretq_f64_u64(vandq_u64(vreinterpretq_u64_f64(vld1q_f64(dy + i)), mask));
    vst1q_f64(dx + i, vaddq_f64(vld1q_f64(dx + i), gated));
  }
  for (; i < n; ++i) {
    if (pre[i] > 0.0) dx[i] += dy[i];
  }
}

void n_adam_step(std::size_t n, double* p, const double* g, double* m, double* v, double lr,
                 double beta1, double beta2, double eps, double bc1, double bc2) {
  const float64x2_t b1 = vdupq_n_f64(beta1);
  const float64x2_t b2 = vdupq_n_f64(beta2);
  const float64x2_t omb1 = vdupq_n_f64(1.0 - beta1);
  const float64x2_t omb2 = vdupq_n_f64(1.0 - beta2);
  const float64x2_t inv_bc1 = vdupq_n_f64(1.0 / bc1);
  const float64x2_t inv_bc2 = vdupq_n_f64(1.0 / bc2);
  const float64x2_t lrv = vdupq_n_f64(lr);
  const float64x2_t epsv = vdupq_n_f64(eps);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t gv = vld1q_f64(g + i);
    float64x2_t mv = vld1q_f64(m + i);
    float64x2_t vv = vld1q_f64(v + i);
    mv = vfmaq_f64(vmulq_f64(b1, mv), omb1, gv);
    vv = vfmaq_f64(vmulq_f64(b2, vv), omb2, vmulq_f64(gv, gv));
    vst1q_f64(m + i, mv);
    vst1q_f64(v + i, vv);
    const float64x2_t mhat = vmulq_f64(mv, inv_bc1);
    const float64x2_t vhat = vmulq_f64(vv, inv_bc2);
    const float64x2_t denom = vaddq_f64(vsqrtq_f64(vhat), epsv);
    const float64x2_t step = vdivq_f64(vmulq_f64(lrv, mhat), denom);
    vst1q_f64(p + i, vsubq_f64(vld1q_f64(p + i), step));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

constexpr Ops kNeonOps = {
    "neon", n_gemm_nn, n_gemm_nt, n_gemm_tn, n_axpy, n_dot, n_relu, n_relu_grad, n_adam_step,
};

}  // namespace

const Ops& neon_ops() { return kNeonOps; }

}  // namespace pslr::kern

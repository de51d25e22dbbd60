#include "pslr/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

namespace pslr::kern {

#if defined(PSLR_BUILD_AVX2)
const Ops& avx2_ops();  // kernels_avx2.cpp
#endif
#if defined(PSLR_BUILD_NEON)
const Ops& neon_ops();  // kernels_neon.cpp
#endif

// ---------------------------------------------------------------------------
// Scalar reference kernels
// ---------------------------------------------------------------------------

namespace {

void scale_row(double* c, std::size_t n, double beta) {
  if (beta == 0.0) {
    std::memset(c, 0, n * sizeof(double));
  } else if (beta != 1.0) {
    for (std::size_t j = 0; j < n; ++j) c[j] *= beta;
  }
}

void s_gemm_nn(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* A,
               std::size_t lda, const double* B, std::size_t ldb, double beta, double* C,
               std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * ldc;
    scale_row(crow, n, beta);
    const double* arow = A + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = alpha * arow[p];
      const double* brow = B + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

void s_gemm_nt(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* A,
               std::size_t lda, const double* B, std::size_t ldb, double beta, double* C,
               std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A + i * lda;
    double* crow = C + i * ldc;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = B + j * ldb;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = (beta == 0.0 ? 0.0 : beta * crow[j]) + alpha * acc;
    }
  }
}

void s_gemm_tn(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* A,
               std::size_t lda, const double* B, std::size_t ldb, double beta, double* C,
               std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) scale_row(C + i * ldc, n, beta);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = A + p * lda;
    const double* brow = B + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      const double a = alpha * arow[i];
      double* crow = C + i * ldc;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

void s_axpy(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double s_dot(std::size_t n, const double* x, const double* y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void s_relu(std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_grad(std::size_t n, const double* pre, const double* dy, double* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    if (pre[i] > 0.0) dx[i] += dy[i];
  }
}

void s_adam_step(std::size_t n, double* p, const double* g, double* m, double* v, double lr,
                 double beta1, double beta2, double eps, double bc1, double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

constexpr Ops kScalarOps = {
    "scalar", s_gemm_nn, s_gemm_nt, s_gemm_tn, s_axpy, s_dot, s_relu, s_relu_grad, s_adam_step,
};

const Ops* select() {
  if (const char* env = std::getenv("PSLR_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return &kScalarOps;
#if defined(PSLR_BUILD_AVX2)
    if (want == "avx2") return &avx2_ops();
#endif
#if defined(PSLR_BUILD_NEON)
    if (want == "neon") return &neon_ops();
#endif
    return &kScalarOps;  // unknown name: fall back rather than abort
  }
#if defined(PSLR_BUILD_AVX2)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return &avx2_ops();
#endif
#if defined(PSLR_BUILD_NEON)
  return &neon_ops();
#endif
  return &kScalarOps;
}

}  // namespace

const Ops& scalar_ops() { return kScalarOps; }

const Ops& active() {
  static const Ops* chosen = select();
  return *chosen;
}

std::vector<const Ops*> available() {
  std::vector<const Ops*> out{&kScalarOps};
#if defined(PSLR_BUILD_AVX2)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) out.push_back(&avx2_ops());
#endif
#if defined(PSLR_BUILD_NEON)
  out.push_back(&neon_ops());
#endif
  return out;
}

}  // namespace pslr::kern

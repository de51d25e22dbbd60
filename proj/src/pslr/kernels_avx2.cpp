// AVX2/FMA variants of the hot kernels (4 doubles per vector). Compiled with
// -mavx2 -mfma in its own translation unit; only reached through runtime
// dispatch after a cpuid check.

#include <immintrin.h>

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

// Row-update form: for each (i,p), C[i,:] += alpha*A[i,p] * B[p,:].
void a_gemm_nn(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* A,
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
      const __m256d av = _mm256_set1_pd(a);
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8) {
        __m256d c0 = _mm256_loadu_pd(crow + j);
        __m256d c1 = _mm256_loadu_pd(crow + j + 4);
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
        c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j + 4), c1);
        _mm256_storeu_pd(crow + j, c0);
        _mm256_storeu_pd(crow + j + 4, c1);
      }
      for (; j + 4 <= n; j += 4) {
        __m256d c0 = _mm256_loadu_pd(crow + j);
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
        _mm256_storeu_pd(crow + j, c0);
      }
      for (; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

inline double dot_impl(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void a_gemm_nt(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* A,
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

void a_gemm_tn(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* A,
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
      const __m256d av = _mm256_set1_pd(a);
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d c0 = _mm256_loadu_pd(crow + j);
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
        _mm256_storeu_pd(crow + j, c0);
      }
      for (; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

void a_axpy(std::size_t n, double a, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double a_dot(std::size_t n, const double* x, const double* y) { return dot_impl(n, x, y); }

void a_relu(std::size_t n, const double* x, double* y) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void a_relu_grad(std::size_t n, const double* pre, const double* dy, double* dx) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(pre + i), zero, _CMP_GT_OQ);
    const __m256d gated = _mm256_and_pd(_mm256_loadu_pd(dy + i), mask);
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), gated));
  }
  for (; i < n; ++i) {
    if (pre[i] > 0.0) dx[i] += dy[i];
  }
}

void a_adam_step(std::size_t n, double* p, const double* g, double* m, double* v, double lr,
                 double beta1, double beta2, double eps, double bc1, double bc2) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d inv_bc1 = _mm256_set1_pd(1.0 / bc1);
  const __m256d inv_bc2 = _mm256_set1_pd(1.0 / bc2);
  const __m256d lrv = _mm256_set1_pd(lr);
  const __m256d epsv = _mm256_set1_pd(eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    __m256d mv = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    mv = _mm256_fmadd_pd(omb1, gv, _mm256_mul_pd(b1, mv));
    vv = _mm256_fmadd_pd(omb2, _mm256_mul_pd(gv, gv), _mm256_mul_pd(b2, vv));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(mv, inv_bc1);
    const __m256d vhat = _mm256_mul_pd(vv, inv_bc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lrv, mhat), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

constexpr Ops kAvx2Ops = {
    "avx2", a_gemm_nn, a_gemm_nt, a_gemm_tn, a_axpy, a_dot, a_relu, a_relu_grad, a_adam_step,
};

}  // namespace

const Ops& avx2_ops() { return kAvx2Ops; }

}  // namespace pslr::kern

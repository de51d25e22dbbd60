#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pslr::kern {

// Hot arithmetic primitives. Every entry has a scalar reference implementation
// plus SIMD variants (AVX2 on x86-64, NEON on arm64) selected at runtime and
// equivalence-tested against the reference.
//
// All matrices are row-major with explicit leading dimensions.
struct Ops {
  const char* name;

  // C = beta*C + alpha * A(m x k) * B(k x n)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* A,
                  std::size_t lda, const double* B, std::size_t ldb, double beta, double* C,
                  std::size_t ldc);
  // C = beta*C + alpha * A(m x k) * B(n x k)^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* A,
                  std::size_t lda, const double* B, std::size_t ldb, double beta, double* C,
                  std::size_t ldc);
  // C = beta*C + alpha * A(k x m)^T * B(k x n)
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* A,
                  std::size_t lda, const double* B, std::size_t ldb, double beta, double* C,
                  std::size_t ldc);

  // y += a * x
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // y = max(x, 0)
  void (*relu)(std::size_t n, const double* x, double* y);
  // dx += dy where pre > 0
  void (*relu_grad)(std::size_t n, const double* pre, const double* dy, double* dx);
  // Bias-corrected Adam update; bc1 = 1-beta1^t, bc2 = 1-beta2^t.
  void (*adam_step)(std::size_t n, double* p, const double* g, double* m, double* v, double lr,
                    double beta1, double beta2, double eps, double bc1, double bc2);
};

const Ops& scalar_ops();

// Implementation chosen for this process: best SIMD variant the CPU supports,
// overridable with PSLR_KERNELS=scalar|avx2|neon.
const Ops& active();

// All implementations compiled in and supported by this CPU.
std::vector<const Ops*> available();

}  // namespace pslr::kern

#include "wildsam/kernels.hpp"

#include <cstring>

namespace wildsam::kernels {
namespace {

void gemm_nn_scalar(int M, int N, int K, const double* A, int lda,
                    const double* B, int ldb, double* C, int ldc,
                    bool accumulate) {
  for (int i = 0; i < M; ++i) {
    double* c = C + static_cast<size_t>(i) * ldc;
    if (!accumulate) std::memset(c, 0, sizeof(double) * N);
    const double* a = A + static_cast<size_t>(i) * lda;
    for (int k = 0; k < K; ++k) {
      const double aik = a[k];
      const double* b = B + static_cast<size_t>(k) * ldb;
      for (int j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

void gemm_nt_scalar(int M, int N, int K, const double* A, int lda,
                    const double* B, int ldb, double* C, int ldc,
                    bool accumulate) {
  for (int i = 0; i < M; ++i) {
    const double* a = A + static_cast<size_t>(i) * lda;
    double* c = C + static_cast<size_t>(i) * ldc;
    for (int j = 0; j < N; ++j) {
      const double* b = B + static_cast<size_t>(j) * ldb;
      double acc = 0.0;
      for (int k = 0; k < K; ++k) acc += a[k] * b[k];
      c[j] = accumulate ? c[j] + acc : acc;
    }
  }
}

void gemm_tn_scalar(int M, int N, int K, const double* A, int lda,
                    const double* B, int ldb, double* C, int ldc,
                    bool accumulate) {
  if (!accumulate) {
    for (int i = 0; i < M; ++i)
      std::memset(C + static_cast<size_t>(i) * ldc, 0, sizeof(double) * N);
  }
  for (int k = 0; k < K; ++k) {
    const double* a = A + static_cast<size_t>(k) * lda;
    const double* b = B + static_cast<size_t>(k) * ldb;
    for (int i = 0; i < M; ++i) {
      const double aki = a[i];
      double* c = C + static_cast<size_t>(i) * ldc;
      for (int j = 0; j < N; ++j) c[j] += aki * b[j];
    }
  }
}

void axpy_scalar(int n, double a, const double* x, double* y) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

void vadd_scalar(int n, const double* a, const double* b, double* out) {
  for (int i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void vmul_scalar(int n, const double* a, const double* b, double* out) {
  for (int i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void vscale_scalar(int n, double a, const double* x, double* out) {
  for (int i = 0; i < n; ++i) out[i] = a * x[i];
}

double dot_scalar(int n, const double* a, const double* b) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double vsum_scalar(int n, const double* a) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i];
  return acc;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{
      "scalar",      gemm_nn_scalar, gemm_nt_scalar, gemm_tn_scalar,
      axpy_scalar,   vadd_scalar,    vmul_scalar,    vscale_scalar,
      dot_scalar,    vsum_scalar,
  };
  return t;
}

}  // namespace wildsam::kernels

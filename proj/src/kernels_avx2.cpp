// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; callers must gate on runtime CPU support (see dispatch).

#include "wildsam/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstring>

namespace wildsam::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

void gemm_nn_avx2(int M, int N, int K, const double* A, int lda,
                  const double* B, int ldb, double* C, int ldc,
                  bool accumulate) {
  const int n4 = N & ~3;
  for (int i = 0; i < M; ++i) {
    double* c = C + static_cast<size_t>(i) * ldc;
    if (!accumulate) std::memset(c, 0, sizeof(double) * N);
    const double* a = A + static_cast<size_t>(i) * lda;
    int k = 0;
    // Two k-steps per pass keeps two independent FMA chains in flight.
    for (; k + 1 < K; k += 2) {
      const __m256d a0 = _mm256_set1_pd(a[k]);
      const __m256d a1 = _mm256_set1_pd(a[k + 1]);
      const double* b0 = B + static_cast<size_t>(k) * ldb;
      const double* b1 = b0 + ldb;
      int j = 0;
      for (; j < n4; j += 4) {
        __m256d cv = _mm256_loadu_pd(c + j);
        cv = _mm256_fmadd_pd(a0, _mm256_loadu_pd(b0 + j), cv);
        cv = _mm256_fmadd_pd(a1, _mm256_loadu_pd(b1 + j), cv);
        _mm256_storeu_pd(c + j, cv);
      }
      for (; j < N; ++j) c[j] += a[k] * b0[j] + a[k + 1] * b1[j];
    }
    for (; k < K; ++k) {
      const __m256d av = _mm256_set1_pd(a[k]);
      const double* b = B + static_cast<size_t>(k) * ldb;
      int j = 0;
      for (; j < n4; j += 4) {
        __m256d cv = _mm256_loadu_pd(c + j);
        cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + j), cv);
        _mm256_storeu_pd(c + j, cv);
      }
      for (; j < N; ++j) c[j] += a[k] * b[j];
    }
  }
}

void gemm_nt_avx2(int M, int N, int K, const double* A, int lda,
                  const double* B, int ldb, double* C, int ldc,
                  bool accumulate) {
  const int k4 = K & ~3;
  for (int i = 0; i < M; ++i) {
    const double* a = A + static_cast<size_t>(i) * lda;
    double* c = C + static_cast<size_t>(i) * ldc;
    for (int j = 0; j < N; ++j) {
      const double* b = B + static_cast<size_t>(j) * ldb;
      __m256d acc = _mm256_setzero_pd();
      int k = 0;
      for (; k < k4; k += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k),
                              acc);
      double s = hsum(acc);
      for (; k < K; ++k) s += a[k] * b[k];
      c[j] = accumulate ? c[j] + s : s;
    }
  }
}

void gemm_tn_avx2(int M, int N, int K, const double* A, int lda,
                  const double* B, int ldb, double* C, int ldc,
                  bool accumulate) {
  if (!accumulate) {
    for (int i = 0; i < M; ++i)
      std::memset(C + static_cast<size_t>(i) * ldc, 0, sizeof(double) * N);
  }
  const int n4 = N & ~3;
  for (int k = 0; k < K; ++k) {
    const double* a = A + static_cast<size_t>(k) * lda;
    const double* b = B + static_cast<size_t>(k) * ldb;
    for (int i = 0; i < M; ++i) {
      const __m256d av = _mm256_set1_pd(a[i]);
      double* c = C + static_cast<size_t>(i) * ldc;
      int j = 0;
      for (; j < n4; j += 4) {
        __m256d cv = _mm256_loadu_pd(c + j);
        cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + j), cv);
        _mm256_storeu_pd(c + j, cv);
      }
      for (; j < N; ++j) c[j] += a[i] * b[j];
    }
  }
}

void axpy_avx2(int n, double a, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(a);
  int i = 0;
  for (; i + 3 < n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void vadd_avx2(int n, const double* a, const double* b, double* out) {
  int i = 0;
  for (; i + 3 < n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void vmul_avx2(int n, const double* a, const double* b, double* out) {
  int i = 0;
  for (; i + 3 < n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void vscale_avx2(int n, double a, const double* x, double* out) {
  const __m256d av = _mm256_set1_pd(a);
  int i = 0;
  for (; i + 3 < n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

double dot_avx2(int n, const double* a, const double* b) {
  __m256d acc = _mm256_setzero_pd();
  int i = 0;
  for (; i + 3 < n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double vsum_avx2(int n, const double* a) {
  __m256d acc = _mm256_setzero_pd();
  int i = 0;
  for (; i + 3 < n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

}  // namespace

const KernelTable* avx2_table_impl() {
  static const KernelTable t{
      "avx2",     gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2, axpy_avx2,
      vadd_avx2,  vmul_avx2,    vscale_avx2,  dot_avx2,     vsum_avx2,
  };
  return &t;
}

}  // namespace wildsam::kernels

#else

namespace wildsam::kernels {
const KernelTable* avx2_table_impl() { return nullptr; }
}  // namespace wildsam::kernels

#endif

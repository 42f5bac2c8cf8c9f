#pragma once

#include <cstddef>
#include <string>

// Low-level dense kernels on contiguous double arrays. A scalar reference
// implementation always exists; an AVX2+FMA variant is selected at runtime
// when the CPU supports it. Both variants implement the identical contract
// and are cross-checked by the kernel equivalence tests.
//
// gemm_* operate on row-major matrices. When `accumulate` is false the
// output block is overwritten, otherwise the product is added into it.
//   gemm_nn: C[MxN] = A[MxK] * B[KxN]
//   gemm_nt: C[MxN] = A[MxK] * B[NxK]^T
//   gemm_tn: C[MxN] = A[KxM]^T * B[KxN]

namespace wildsam::kernels {

using GemmFn = void (*)(int M, int N, int K, const double* A, int lda,
                        const double* B, int ldb, double* C, int ldc,
                        bool accumulate);

struct KernelTable {
  const char* name;
  GemmFn gemm_nn;
  GemmFn gemm_nt;
  GemmFn gemm_tn;
  void (*axpy)(int n, double a, const double* x, double* y);  // y += a*x
  void (*vadd)(int n, const double* a, const double* b, double* out);
  void (*vmul)(int n, const double* a, const double* b, double* out);
  void (*vscale)(int n, double a, const double* x, double* out);
  double (*dot)(int n, const double* a, const double* b);
  double (*vsum)(int n, const double* a);
};

const KernelTable& scalar_table();

// nullptr when the binary or CPU lacks AVX2+FMA support.
const KernelTable* avx2_table();

// Active table: AVX2 when available, unless overridden by force() or the
// WILDSAM_KERNELS environment variable ("scalar" or "avx2").
const KernelTable& active();

// Force a specific implementation ("scalar", "avx2", or "auto").
// Throws std::runtime_error if the requested table is unavailable.
void force(const std::string& name);

}  // namespace wildsam::kernels

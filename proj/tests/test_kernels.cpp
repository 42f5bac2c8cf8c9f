#include <cmath>
#include <vector>

#include "doctest.h"
#include "wildsam/kernels.hpp"
#include "wildsam/rng.hpp"

using namespace wildsam;
using namespace wildsam::kernels;

namespace {

std::vector<double> rand_vec(size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

void naive_gemm_nn(int M, int N, int K, const double* A, const double* B,
                   double* C) {
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += A[i * K + k] * B[k * N + j];
      C[i * N + j] = s;
    }
}

}  // namespace

TEST_CASE("scalar gemm_nn matches a naive triple loop") {
  Rng rng(11);
  for (auto [M, N, K] : {std::array{3, 4, 5}, {1, 7, 2}, {8, 8, 8}}) {
    auto A = rand_vec(static_cast<size_t>(M * K), rng);
    auto B = rand_vec(static_cast<size_t>(K * N), rng);
    std::vector<double> C(static_cast<size_t>(M * N), 0.0);
    std::vector<double> ref(C);
    scalar_table().gemm_nn(M, N, K, A.data(), K, B.data(), N, C.data(), N,
                           false);
    naive_gemm_nn(M, N, K, A.data(), B.data(), ref.data());
    for (size_t i = 0; i < C.size(); ++i)
      CHECK(C[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("gemm transposed variants agree with explicit transposition") {
  Rng rng(12);
  const int M = 5, N = 6, K = 7;
  auto A = rand_vec(static_cast<size_t>(M * K), rng);
  auto B = rand_vec(static_cast<size_t>(K * N), rng);
  std::vector<double> ref(static_cast<size_t>(M * N));
  naive_gemm_nn(M, N, K, A.data(), B.data(), ref.data());

  // nt: B stored as [N,K]
  std::vector<double> Bt(static_cast<size_t>(N * K));
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < N; ++j) Bt[static_cast<size_t>(j * K + k)] = B[static_cast<size_t>(k * N + j)];
  std::vector<double> C(static_cast<size_t>(M * N), 0.0);
  scalar_table().gemm_nt(M, N, K, A.data(), K, Bt.data(), K, C.data(), N,
                         false);
  for (size_t i = 0; i < C.size(); ++i) CHECK(C[i] == doctest::Approx(ref[i]));

  // tn: A stored as [K,M]
  std::vector<double> At(static_cast<size_t>(K * M));
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < K; ++k) At[static_cast<size_t>(k * M + i)] = A[static_cast<size_t>(i * K + k)];
  std::fill(C.begin(), C.end(), 0.0);
  scalar_table().gemm_tn(M, N, K, At.data(), M, B.data(), N, C.data(), N,
                         false);
  for (size_t i = 0; i < C.size(); ++i) CHECK(C[i] == doctest::Approx(ref[i]));
}

TEST_CASE("gemm accumulate adds into the output block") {
  Rng rng(13);
  const int M = 4, N = 3, K = 2;
  auto A = rand_vec(static_cast<size_t>(M * K), rng);
  auto B = rand_vec(static_cast<size_t>(K * N), rng);
  std::vector<double> C(static_cast<size_t>(M * N), 1.0);
  std::vector<double> ref(static_cast<size_t>(M * N));
  naive_gemm_nn(M, N, K, A.data(), B.data(), ref.data());
  scalar_table().gemm_nn(M, N, K, A.data(), K, B.data(), N, C.data(), N,
                         true);
  for (size_t i = 0; i < C.size(); ++i)
    CHECK(C[i] == doctest::Approx(1.0 + ref[i]));
}

TEST_CASE("avx2 kernels match scalar kernels elementwise" *
          doctest::skip(avx2_table() == nullptr)) {
  const KernelTable* avx = avx2_table();
  REQUIRE(avx != nullptr);
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const int M = 1 + rng.uniform_int(17);
    const int N = 1 + rng.uniform_int(17);
    const int K = 1 + rng.uniform_int(33);
    auto A = rand_vec(static_cast<size_t>(M * K), rng);
    auto Bn = rand_vec(static_cast<size_t>(K * N), rng);
    std::vector<double> Cs(static_cast<size_t>(M * N), 0.5);
    std::vector<double> Cv(Cs);
    const bool acc = trial % 2 == 0;
    scalar_table().gemm_nn(M, N, K, A.data(), K, Bn.data(), N, Cs.data(), N,
                           acc);
    avx->gemm_nn(M, N, K, A.data(), K, Bn.data(), N, Cv.data(), N, acc);
    for (size_t i = 0; i < Cs.size(); ++i)
      CHECK(Cv[i] == doctest::Approx(Cs[i]).epsilon(1e-12));

    auto Bt = rand_vec(static_cast<size_t>(N * K), rng);
    std::fill(Cs.begin(), Cs.end(), 0.0);
    std::fill(Cv.begin(), Cv.end(), 0.0);
    scalar_table().gemm_nt(M, N, K, A.data(), K, Bt.data(), K, Cs.data(), N,
                           false);
    avx->gemm_nt(M, N, K, A.data(), K, Bt.data(), K, Cv.data(), N, false);
    for (size_t i = 0; i < Cs.size(); ++i)
      CHECK(Cv[i] == doctest::Approx(Cs[i]).epsilon(1e-12));

    auto At = rand_vec(static_cast<size_t>(K * M), rng);
    std::fill(Cs.begin(), Cs.end(), 0.0);
    std::fill(Cv.begin(), Cv.end(), 0.0);
    scalar_table().gemm_tn(M, N, K, At.data(), M, Bn.data(), N, Cs.data(), N,
                           false);
    avx->gemm_tn(M, N, K, At.data(), M, Bn.data(), N, Cv.data(), N, false);
    for (size_t i = 0; i < Cs.size(); ++i)
      CHECK(Cv[i] == doctest::Approx(Cs[i]).epsilon(1e-12));
  }

  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + rng.uniform_int(70);
    auto a = rand_vec(static_cast<size_t>(n), rng);
    auto b = rand_vec(static_cast<size_t>(n), rng);
    std::vector<double> s(static_cast<size_t>(n)), v(static_cast<size_t>(n));
    scalar_table().vadd(n, a.data(), b.data(), s.data());
    avx->vadd(n, a.data(), b.data(), v.data());
    CHECK(s == v);
    scalar_table().vmul(n, a.data(), b.data(), s.data());
    avx->vmul(n, a.data(), b.data(), v.data());
    CHECK(s == v);
    scalar_table().vscale(n, 1.7, a.data(), s.data());
    avx->vscale(n, 1.7, a.data(), v.data());
    CHECK(s == v);
    std::copy(b.begin(), b.end(), s.begin());
    std::copy(b.begin(), b.end(), v.begin());
    scalar_table().axpy(n, -0.3, a.data(), s.data());
    avx->axpy(n, -0.3, a.data(), v.data());
    for (int i = 0; i < n; ++i)
      CHECK(v[static_cast<size_t>(i)] ==
            doctest::Approx(s[static_cast<size_t>(i)]).epsilon(1e-14));
    CHECK(avx->dot(n, a.data(), b.data()) ==
          doctest::Approx(scalar_table().dot(n, a.data(), b.data()))
              .epsilon(1e-12));
    CHECK(avx->vsum(n, a.data()) ==
          doctest::Approx(scalar_table().vsum(n, a.data())).epsilon(1e-12));
  }
}

TEST_CASE("force() switches the active table and rejects unknown names") {
  force("scalar");
  CHECK(std::string(active().name) == "scalar");
  CHECK_THROWS_AS(force("neon"), std::runtime_error);
  force("auto");
  if (avx2_table() != nullptr) {
    force("avx2");
    CHECK(std::string(active().name) == "avx2");
    force("auto");
  }
}

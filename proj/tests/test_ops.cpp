#include <cmath>
#include <numbers>

#include "doctest.h"
#include "wildsam/ops.hpp"
#include "wildsam/rng.hpp"

using namespace wildsam;
using namespace wildsam::ops;

namespace {

Tensor random_tensor(Shape shape, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor t = Tensor::zeros(shape);
  for (auto& x : t.data()) x = rng.uniform(-scale, scale);
  return t;
}

// max |g_ad - g_fd| / max(1, |g_fd|_inf), per the autodiff soundness rule
double grad_vs_fd(const std::function<Tensor(const Tensor&)>& op, Tensor x) {
  x.set_requires_grad(true);
  x.zero_grad();
  {
    GradientTape tape;
    Tensor loss = sum(mul(op(x), op(x)));  // generic nonlinear reduction
    backward(loss);
  }
  Tensor fd = fd_gradient(
      [&](const Tensor& v) {
        Tensor y = op(v);
        return sum(mul(y, y)).item();
      },
      x, 1e-5);
  double norm = 1.0, err = 0.0;
  for (int64_t i = 0; i < fd.size(); ++i)
    norm = std::max(norm, std::abs(fd.at(i)));
  for (int64_t i = 0; i < fd.size(); ++i)
    err = std::max(err, std::abs(x.grad()[static_cast<size_t>(i)] - fd.at(i)));
  return err / norm;
}

}  // namespace

TEST_CASE("backward of sum gives all-ones; of sum of squares gives 2x") {
  Tensor x = random_tensor({3, 4}, 21);
  x.set_requires_grad(true);
  {
    GradientTape tape;
    backward(sum(x));
  }
  for (double g : x.grad()) CHECK(g == 1.0);

  x.zero_grad();
  {
    GradientTape tape;
    backward(sum(mul(x, x)));
  }
  for (int64_t i = 0; i < x.size(); ++i)
    CHECK(x.grad()[static_cast<size_t>(i)] == doctest::Approx(2.0 * x.at(i)));
}

TEST_CASE("backward usage errors") {
  Tensor x = random_tensor({2, 2}, 22);
  x.set_requires_grad(true);
  CHECK_THROWS_AS(backward(sum(x)), UsageError);  // no live tape
  {
    GradientTape tape;
    Tensor s = sum(x);
    backward(s);
    CHECK_THROWS_AS(backward(s), UsageError);  // tape consumed
  }
  {
    GradientTape tape;
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(backward(y), UsageError);  // non-scalar loss
  }
}

TEST_CASE("matmul examples") {
  Tensor I = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor A = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(I, A);
  for (int64_t i = 0; i < 4; ++i) CHECK(r.at(i) == A.at(i));

  Tensor b = Tensor::from_data({2, 1}, {1, 1});
  Tensor p = matmul(A, b);
  CHECK(p.at(0) == 3.0);
  CHECK(p.at(1) == 7.0);

  Tensor z = matmul(A, Tensor::zeros({2, 3}));
  for (int64_t i = 0; i < z.size(); ++i) CHECK(z.at(i) == 0.0);

  CHECK_THROWS_AS(matmul(A, Tensor::zeros({3, 2})), DimensionError);
}

TEST_CASE("softmax examples and simplex property") {
  Tensor u = softmax_lastdim(Tensor::zeros({4}));
  for (int64_t i = 0; i < 4; ++i) CHECK(u.at(i) == doctest::Approx(0.25));

  Tensor big = softmax_lastdim(Tensor::from_data({2}, {1000.0, 0.0}));
  CHECK(big.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(big.at(1) == doctest::Approx(0.0).epsilon(1e-12));

  Tensor logs = softmax_lastdim(Tensor::from_data(
      {3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  CHECK(logs.at(0) == doctest::Approx(1.0 / 6));
  CHECK(logs.at(1) == doctest::Approx(2.0 / 6));
  CHECK(logs.at(2) == doctest::Approx(3.0 / 6));

  // shift invariance
  Tensor x = random_tensor({5, 7}, 23, 3.0);
  Tensor shifted = add_const(x, 11.5);
  Tensor a = softmax_lastdim(x), b = softmax_lastdim(shifted);
  for (int64_t i = 0; i < a.size(); ++i)
    CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-12));
}

TEST_CASE("gelu and sigmoid closed-form points") {
  CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(gelu(Tensor::scalar(30.0)).item() == doctest::Approx(30.0));
  CHECK(gelu(Tensor::scalar(-30.0)).item() == doctest::Approx(0.0));
  // Phi(1) = 0.841344746...
  CHECK(gelu(Tensor::scalar(1.0)).item() ==
        doctest::Approx(0.8413447460685429).epsilon(1e-12));

  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(sigmoid(Tensor::scalar(std::log(3.0))).item() ==
        doctest::Approx(0.75));
  Tensor x = random_tensor({9}, 24, 5.0);
  Tensor s1 = sigmoid(x), s2 = sigmoid(neg(x));
  for (int64_t i = 0; i < x.size(); ++i)
    CHECK(s1.at(i) + s2.at(i) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::isfinite(sigmoid(Tensor::scalar(-900.0)).item()));
}

TEST_CASE("global_average_pool") {
  Tensor c = Tensor::full({2, 3, 4, 4}, 1.75);
  Tensor g = global_average_pool(c);
  for (int64_t i = 0; i < g.size(); ++i) CHECK(g.at(i) == doctest::Approx(1.75));

  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(global_average_pool(x).at(0) == doctest::Approx(2.5));
}

TEST_CASE("conv2d impulse response pins cross-correlation convention") {
  Tensor x = Tensor::zeros({1, 1, 3, 3});
  x.at(4) = 1.0;  // center
  Tensor k = Tensor::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor y = conv2d(x, k, Tensor(), 1, 1, 1, 1);
  // cross-correlation of an impulse yields the flipped kernel
  const double want[9] = {9, 8, 7, 6, 5, 4, 3, 2, 1};
  for (int64_t i = 0; i < 9; ++i) CHECK(y.at(i) == doctest::Approx(want[i]));
  CHECK(y.at(4) == 5.0);

  Tensor zy = conv2d(Tensor::zeros({1, 1, 3, 3}), k, Tensor(), 1, 1, 1, 1);
  for (int64_t i = 0; i < 9; ++i) CHECK(zy.at(i) == 0.0);
}

TEST_CASE("depthwise conv equals independent per-channel convolutions") {
  Tensor x = random_tensor({1, 2, 5, 5}, 25);
  Tensor w = random_tensor({2, 1, 3, 3}, 26);
  Tensor y = conv2d(x, w, Tensor(), 2, 1, 1, 1);
  for (int c = 0; c < 2; ++c) {
    Tensor xc = Tensor::zeros({1, 1, 5, 5});
    Tensor wc = Tensor::zeros({1, 1, 3, 3});
    for (int64_t i = 0; i < 25; ++i) xc.at(i) = x.at(c * 25 + i);
    for (int64_t i = 0; i < 9; ++i) wc.at(i) = w.at(c * 9 + i);
    Tensor yc = conv2d(xc, wc, Tensor(), 1, 1, 1, 1);
    // nested-loop oracle for the single-channel case
    for (int oy = 0; oy < 5; ++oy)
      for (int ox = 0; ox < 5; ++ox) {
        double s = 0.0;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            int iy = oy + ky - 1, ix = ox + kx - 1;
            if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
            s += xc.at(iy * 5 + ix) * wc.at(ky * 3 + kx);
          }
        CHECK(yc.at(oy * 5 + ox) == doctest::Approx(s).epsilon(1e-12));
        CHECK(y.at(c * 25 + oy * 5 + ox) == doctest::Approx(s).epsilon(1e-12));
      }
  }
}

TEST_CASE("conv2d rejects kernel/channel mismatches") {
  Tensor x = random_tensor({1, 3, 4, 4}, 27);
  CHECK_THROWS_AS(conv2d(x, random_tensor({2, 2, 3, 3}, 28), Tensor(), 1, 1,
                         1, 1),
                  DimensionError);
  CHECK_THROWS_AS(conv2d(x, random_tensor({3, 1, 3, 3}, 29), Tensor(), 2, 1,
                         1, 1),
                  DimensionError);
}

TEST_CASE("conv2d linearity and interior translation equivariance") {
  Tensor x = random_tensor({1, 1, 6, 6}, 30);
  Tensor w = random_tensor({1, 1, 3, 3}, 31);
  Tensor y2 = conv2d(scale(x, 2.0), w, Tensor(), 1, 1, 1, 1);
  Tensor y = conv2d(x, w, Tensor(), 1, 1, 1, 1);
  for (int64_t i = 0; i < y.size(); ++i)
    CHECK(y2.at(i) == doctest::Approx(2.0 * y.at(i)).epsilon(1e-12));

  Tensor xs = Tensor::zeros({1, 1, 6, 6});
  for (int r = 0; r < 6; ++r)
    for (int c = 1; c < 6; ++c) xs.at(r * 6 + c) = x.at(r * 6 + c - 1);
  Tensor ys = conv2d(xs, w, Tensor(), 1, 1, 1, 1);
  for (int r = 1; r < 5; ++r)
    for (int c = 2; c < 5; ++c)
      CHECK(ys.at(r * 6 + c) ==
            doctest::Approx(y.at(r * 6 + c - 1)).epsilon(1e-12));
}

TEST_CASE("attention degenerate cases") {
  Tensor q = random_tensor({1, 3, 4}, 32);
  Tensor k1 = random_tensor({1, 1, 4}, 33);
  Tensor v1 = random_tensor({1, 1, 4}, 34);
  Tensor out = scaled_dot_attention(q, k1, v1);
  for (int n = 0; n < 3; ++n)
    for (int64_t d = 0; d < 4; ++d)
      CHECK(out.at(n * 4 + d) == doctest::Approx(v1.at(d)));

  // identical keys -> uniform weights -> mean of v rows
  Tensor k2 = Tensor::zeros({1, 2, 4});
  for (int64_t i = 0; i < 4; ++i) {
    k2.at(i) = 0.3 * static_cast<double>(i);
    k2.at(4 + i) = 0.3 * static_cast<double>(i);
  }
  Tensor v2 = random_tensor({1, 2, 4}, 35);
  Tensor out2 = scaled_dot_attention(q, k2, v2);
  for (int n = 0; n < 3; ++n)
    for (int64_t d = 0; d < 4; ++d)
      CHECK(out2.at(n * 4 + d) ==
            doctest::Approx(0.5 * (v2.at(d) + v2.at(4 + d))));
}

TEST_CASE("attention matches a hand-expanded 2-token case") {
  Tensor q = Tensor::from_data({1, 2, 2}, {1, 0, 0, 1});
  Tensor k = Tensor::from_data({1, 2, 2}, {1, 1, 0, 2});
  Tensor v = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
  Tensor out = scaled_dot_attention(q, k, v);
  const double rt2 = std::sqrt(2.0);
  {
    double l0 = 1.0 / rt2, l1 = 0.0;
    double e0 = std::exp(l0), e1 = std::exp(l1);
    double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);
    CHECK(out.at(0) == doctest::Approx(w0 * 1 + w1 * 3).epsilon(1e-12));
    CHECK(out.at(1) == doctest::Approx(w0 * 2 + w1 * 4).epsilon(1e-12));
  }
  {
    double l0 = 1.0 / rt2, l1 = 2.0 / rt2;
    double e0 = std::exp(l0), e1 = std::exp(l1);
    double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);
    CHECK(out.at(2) == doctest::Approx(w0 * 1 + w1 * 3).epsilon(1e-12));
    CHECK(out.at(3) == doctest::Approx(w0 * 2 + w1 * 4).epsilon(1e-12));
  }
}

TEST_CASE("fd oracle sanity") {
  Tensor x = Tensor::from_data({2}, {1, 2});
  Tensor g1 = fd_gradient([](const Tensor& v) { return sum(v).item(); }, x,
                          1e-5);
  CHECK(g1.at(0) == doctest::Approx(1.0));
  CHECK(g1.at(1) == doctest::Approx(1.0));
  Tensor g2 = fd_gradient(
      [](const Tensor& v) { return 0.5 * sum(mul(v, v)).item(); }, x, 1e-5);
  CHECK(g2.at(0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(g2.at(1) == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("per-op gradients match finite differences") {
  CHECK(grad_vs_fd([](const Tensor& v) { return gelu(v); },
                   random_tensor({3, 5}, 40)) < 1e-6);
  CHECK(grad_vs_fd([](const Tensor& v) { return sigmoid(v); },
                   random_tensor({3, 5}, 41)) < 1e-6);
  CHECK(grad_vs_fd([](const Tensor& v) { return softmax_lastdim(v); },
                   random_tensor({4, 6}, 42)) < 1e-6);
  Tensor w = random_tensor({5, 4}, 43);
  CHECK(grad_vs_fd([&](const Tensor& v) { return matmul(v, w); },
                   random_tensor({3, 5}, 44)) < 1e-6);
  Tensor kk = random_tensor({2, 1, 3, 3}, 45);
  CHECK(grad_vs_fd(
            [&](const Tensor& v) { return conv2d(v, kk, Tensor(), 2, 1, 1, 1); },
            random_tensor({1, 2, 5, 5}, 46)) < 1e-6);
  Tensor kd = random_tensor({3, 2, 3, 3}, 47);
  CHECK(grad_vs_fd(
            [&](const Tensor& v) { return conv2d(v, kd, Tensor(), 1, 2, 2, 2); },
            random_tensor({1, 2, 6, 6}, 48)) < 1e-6);
  Tensor tw = random_tensor({2, 3, 2, 2}, 49);
  CHECK(grad_vs_fd(
            [&](const Tensor& v) { return conv_transpose2x2(v, tw, Tensor()); },
            random_tensor({1, 2, 3, 3}, 50)) < 1e-6);
  Tensor g = random_tensor({6}, 51);
  Tensor b = random_tensor({6}, 52);
  CHECK(grad_vs_fd([&](const Tensor& v) { return layer_norm(v, g, b); },
                   random_tensor({4, 6}, 53)) < 1e-5);
  CHECK(grad_vs_fd(
            [](const Tensor& v) { return bilinear_resize(v, 7, 5); },
            random_tensor({1, 2, 4, 6}, 54)) < 1e-6);
  CHECK(grad_vs_fd(
            [](const Tensor& v) {
              Subbands s = dwt_haar(v);
              return concat({s.lh, s.hl, s.hh}, 1);
            },
            random_tensor({1, 2, 4, 4}, 55)) < 1e-6);
  Tensor kq = random_tensor({2, 3, 4}, 56);
  Tensor kv = random_tensor({2, 3, 4}, 57);
  CHECK(grad_vs_fd(
            [&](const Tensor& v) { return scaled_dot_attention(v, kq, kv); },
            random_tensor({2, 5, 4}, 58)) < 1e-6);
  CHECK(grad_vs_fd([](const Tensor& v) { return extract_patches(v, 2); },
                   random_tensor({1, 2, 4, 4}, 59)) < 1e-6);
  Tensor sc = random_tensor({3, 4}, 60);
  CHECK(grad_vs_fd([&](const Tensor& v) { return mul_channels(v, sc); },
                   random_tensor({3, 5, 4}, 61)) < 1e-6);
  Tensor bs = random_tensor({3}, 62);
  CHECK(grad_vs_fd([&](const Tensor& v) { return mul_batch_scalar(v, bs); },
                   random_tensor({3, 2, 2}, 63)) < 1e-6);
}

TEST_CASE("randomly composed graphs match finite differences") {
  Rng rng(70);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor w1 = random_tensor({6, 8}, 100 + static_cast<uint64_t>(trial));
    Tensor w2 = random_tensor({8, 3}, 200 + static_cast<uint64_t>(trial));
    Tensor g = Tensor::full({6}, 1.0);
    Tensor b = Tensor::zeros({6});
    auto f = [&](const Tensor& v) {
      Tensor h = layer_norm(v, g, b);
      h = gelu(matmul(h, w1));
      h = softmax_lastdim(matmul(h, w2));
      return sigmoid(h);
    };
    CHECK(grad_vs_fd(f, random_tensor({4, 6}, 300 + static_cast<uint64_t>(trial))) <
          1e-5);
  }
}

TEST_CASE("finite outputs on finite inputs") {
  Tensor x = random_tensor({2, 3, 4, 4}, 80, 50.0);
  check_finite(conv2d(x, random_tensor({3, 3, 3, 3}, 81), Tensor(), 1, 1, 1, 1),
               "conv");
  check_finite(softmax_lastdim(x), "softmax");
  check_finite(sigmoid(x), "sigmoid");
}

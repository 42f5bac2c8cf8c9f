#include <cmath>

#include "doctest.h"
#include "wildsam/ops.hpp"
#include "wildsam/rng.hpp"
#include "wildsam/wgse.hpp"

using namespace wildsam;
using namespace wildsam::ops;

namespace {

Tensor random_spatial(Shape s, uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros(s);
  for (auto& x : t.data()) x = rng.uniform(-2.0, 2.0);
  return t;
}

double energy(const Tensor& t) {
  double e = 0.0;
  for (double v : t.data()) e += v * v;
  return e;
}

}  // namespace

TEST_CASE("haar transform of a single 2x2 block") {
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Subbands s = dwt_haar(x);
  CHECK(s.ll.at(0) == doctest::Approx(5.0));
  CHECK(s.lh.at(0) == doctest::Approx(-2.0));
  CHECK(s.hl.at(0) == doctest::Approx(-1.0));
  CHECK(s.hh.at(0) == doctest::Approx(0.0));
}

TEST_CASE("constant input: LL carries everything, high bands vanish") {
  Tensor x = Tensor::full({1, 2, 6, 6}, 1.3);
  Subbands s = dwt_haar(x);
  for (int64_t i = 0; i < s.ll.size(); ++i) {
    CHECK(s.ll.at(i) == doctest::Approx(2.6));
    CHECK(s.lh.at(i) == 0.0);
    CHECK(s.hl.at(i) == 0.0);
    CHECK(s.hh.at(i) == 0.0);
  }
}

TEST_CASE("dwt rejects odd spatial sizes") {
  CHECK_THROWS_AS(dwt_haar(Tensor::zeros({1, 1, 3, 4})), DimensionError);
  CHECK_THROWS_AS(dwt_haar(Tensor::zeros({1, 1, 4, 5})), DimensionError);
}

TEST_CASE("perfect reconstruction and Parseval") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Tensor x = random_spatial({2, 3, 8, 8}, 500 + seed);
    Subbands s = dwt_haar(x);
    Tensor back = idwt_haar(s);
    for (int64_t i = 0; i < x.size(); ++i)
      CHECK(std::abs(back.at(i) - x.at(i)) <= 1e-12);

    double in = energy(x);
    double out = energy(s.ll) + energy(s.lh) + energy(s.hl) + energy(s.hh);
    CHECK(std::abs(in - out) <= 1e-9 * std::max(1.0, in));

    Subbands again = dwt_haar(back);
    for (int64_t i = 0; i < s.ll.size(); ++i) {
      CHECK(std::abs(again.ll.at(i) - s.ll.at(i)) <= 1e-12);
      CHECK(std::abs(again.hh.at(i) - s.hh.at(i)) <= 1e-12);
    }
  }
}

TEST_CASE("zeroing LL yields zero-mean 2x2 blocks") {
  Tensor x = random_spatial({1, 1, 4, 4}, 600);
  Subbands s = dwt_haar(x);
  s.ll = Tensor::zeros(s.ll.shape());
  Tensor y = idwt_haar(s);
  for (int by = 0; by < 2; ++by)
    for (int bx = 0; bx < 2; ++bx) {
      double m = y.at((2 * by) * 4 + 2 * bx) + y.at((2 * by) * 4 + 2 * bx + 1) +
                 y.at((2 * by + 1) * 4 + 2 * bx) +
                 y.at((2 * by + 1) * 4 + 2 * bx + 1);
      CHECK(std::abs(m) <= 1e-12);
    }
}

TEST_CASE("afm produces the right token count for every band") {
  ParamStore store(1);
  WgsePrompt w("wgse", 8, 8, 8, 4, 4, store);
  Tensor sub = random_spatial({2, 8, 4, 4}, 700);
  for (int band = 0; band < 3; ++band) {
    Tensor f = w.afm(sub, band);
    CHECK(f.shape() == Shape{2, 16, 8});
  }
  CHECK_THROWS_AS(w.afm(sub, 3), UsageError);
}

TEST_CASE("afm of zero input with zero biases is zero") {
  ParamStore store(2);
  WgsePrompt w("wgse", 8, 8, 8, 4, 4, store);
  Tensor z = Tensor::zeros({1, 8, 4, 4});
  for (int band = 0; band < 3; ++band) {
    Tensor f = w.afm(z, band);
    for (int64_t i = 0; i < f.size(); ++i) CHECK(f.at(i) == 0.0);
  }
}

TEST_CASE("scb is the identity at init (zero output projection)") {
  ParamStore store(3);
  WgsePrompt w("wgse", 8, 8, 8, 4, 4, store);
  for (int trial = 0; trial < 32; ++trial) {
    Tensor f = random_spatial({2, 6, 8}, 800 + static_cast<uint64_t>(trial));
    Tensor ctx = random_spatial({2, 18, 8}, 900 + static_cast<uint64_t>(trial));
    Tensor out = w.scb(f, ctx);
    CHECK(out.data() == f.data());  // exact, not approximate
  }
  CHECK_THROWS_AS(w.scb(Tensor::zeros({1, 4, 8}), Tensor::zeros({1, 4, 6})),
                  DimensionError);
}

TEST_CASE("scb with a single context token and a live projection") {
  ParamStore store(4);
  WgsePrompt w("wgse", 8, 8, 8, 4, 4, store);
  // make the output projection the identity
  for (auto& p : store.all()) {
    if (p.name == "wgse.scb.wo")
      for (int i = 0; i < 8; ++i) p.value.at(i * 8 + i) = 1.0;
  }
  Tensor f = random_spatial({1, 3, 8}, 1000);
  Tensor ctx = random_spatial({1, 1, 8}, 1001);
  Tensor out = w.scb(f, ctx);
  // single key: attention weight is 1, so out = f + V for every token
  Tensor v = matmul(ctx, store.find("wgse.scb.wv")->value);
  for (int n = 0; n < 3; ++n)
    for (int64_t d = 0; d < 8; ++d)
      CHECK(out.at(n * 8 + d) ==
            doctest::Approx(f.at(n * 8 + d) + v.at(d)).epsilon(1e-12));
}

TEST_CASE("se gate stays in (0,1) and hand-checks on a 2-channel case") {
  ParamStore store(5);
  WgsePrompt w("wgse", 8, 8, 8, 4, 4, store);
  Tensor f = random_spatial({2, 5, 24}, 1100);
  Tensor out = w.se_gate(f);
  CHECK(out.shape() == f.shape());
  for (int64_t i = 0; i < f.size(); ++i) {
    if (f.at(i) > 0.0) {
      CHECK(out.at(i) > 0.0);
      CHECK(out.at(i) < f.at(i));
    } else if (f.at(i) < 0.0) {
      CHECK(out.at(i) < 0.0);
      CHECK(out.at(i) > f.at(i));
    }
  }

  // hand expansion: mean over tokens -> two Linear layers -> sigmoid -> scale
  const Tensor& w1 = store.find("wgse.se.w1")->value;
  const Tensor& w2 = store.find("wgse.se.w2")->value;
  Tensor pooled = mean_tokens(f);
  Tensor hidden = gelu(matmul(pooled, w1));
  Tensor gate = sigmoid(matmul(hidden, w2));
  for (int b = 0; b < 2; ++b)
    for (int n = 0; n < 5; ++n)
      for (int64_t c = 0; c < 24; ++c)
        CHECK(out.at((b * 5 + n) * 24 + c) ==
              doctest::Approx(f.at((b * 5 + n) * 24 + c) * gate.at(b * 24 + c))
                  .epsilon(1e-12));
}

TEST_CASE("dense prompt has the embedding-grid shape; zero tokens map to zero") {
  ParamStore store(6);
  WgsePrompt w("wgse", 8, 8, 8, 5, 7, store);
  Tensor f = Tensor::zeros({2, 16, 24});
  Tensor p = w.to_dense_prompt(f, 4, 4);
  CHECK(p.shape() == Shape{2, 8, 5, 7});
  for (int64_t i = 0; i < p.size(); ++i) CHECK(p.at(i) == 0.0);

  Tensor x = random_spatial({2, 8, 8, 8}, 1200);
  Tensor full = w.forward(x);
  CHECK(full.shape() == Shape{2, 8, 5, 7});
}

TEST_CASE("the dense prompt ignores the LL subband entirely") {
  ParamStore store(7);
  WgsePrompt w("wgse", 4, 8, 8, 4, 4, store);
  // lift the zero-initialized output projection so the prompt is non-trivial
  {
    Rng lift(1299);
    for (auto& p : store.all())
      if (p.name == "wgse.proj.w")
        for (auto& v : p.value.data()) v = lift.uniform(-0.2, 0.2);
  }
  Tensor x = random_spatial({1, 4, 8, 8}, 1300);
  Tensor base = w.forward(x);

  // adding a blockwise-constant field changes only LL
  Tensor shifted = Tensor::from_data(x.shape(), x.data());
  Rng rng(1301);
  for (int c = 0; c < 4; ++c)
    for (int by = 0; by < 4; ++by)
      for (int bx = 0; bx < 4; ++bx) {
        double v = rng.uniform(-3.0, 3.0);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            shifted.at(((c * 8) + 2 * by + dy) * 8 + 2 * bx + dx) += v;
      }
  Subbands sa = dwt_haar(x), sb = dwt_haar(shifted);
  for (int64_t i = 0; i < sa.lh.size(); ++i) {
    CHECK(std::abs(sa.lh.at(i) - sb.lh.at(i)) < 1e-12);
    CHECK(std::abs(sa.hl.at(i) - sb.hl.at(i)) < 1e-12);
    CHECK(std::abs(sa.hh.at(i) - sb.hh.at(i)) < 1e-12);
  }
  Tensor moved = w.forward(shifted);
  for (int64_t i = 0; i < base.size(); ++i)
    CHECK(moved.at(i) == doctest::Approx(base.at(i)).epsilon(1e-9));
}

TEST_CASE("wgse gradients match finite differences") {
  ParamStore store(8);
  WgsePrompt w("wgse", 4, 4, 4, 4, 4, store);
  // lift the zero-initialized projections so their inputs get gradients
  Rng rng(1400);
  for (auto& p : store.all())
    if (p.name == "wgse.scb.wo" || p.name == "wgse.proj.w")
      for (auto& v : p.value.data()) v = rng.uniform(-0.2, 0.2);

  Tensor x = random_spatial({1, 4, 4, 4}, 1401);
  auto loss_of = [&]() {
    Tensor p = w.forward(x);
    return sum(mul(p, p));
  };
  store.zero_grads();
  {
    GradientTape tape;
    backward(loss_of());
  }
  Rng pick(1402);
  for (auto& prm : store.all()) {
    if (!prm.trainable) continue;
    int64_t idx = pick.uniform_int(static_cast<int>(prm.value.size()));
    double analytic = prm.value.grad().empty()
                          ? 0.0
                          : prm.value.grad()[static_cast<size_t>(idx)];
    const double eps = 1e-5;
    double saved = prm.value.at(idx);
    prm.value.at(idx) = saved + eps;
    double lp = loss_of().item();
    prm.value.at(idx) = saved - eps;
    double lm = loss_of().item();
    prm.value.at(idx) = saved;
    double fd = (lp - lm) / (2 * eps);
    CHECK(std::abs(analytic - fd) <=
          1e-4 * std::max({1.0, std::abs(fd), std::abs(analytic)}));
  }
}

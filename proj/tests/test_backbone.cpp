#include "doctest.h"
#include "wildsam/backbone.hpp"
#include "wildsam/model.hpp"
#include "wildsam/ops.hpp"
#include "wildsam/rng.hpp"

using namespace wildsam;

namespace {

Tensor random_image(int size, uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({1, 3, size, size});
  for (auto& x : t.data()) x = rng.uniform(-1.5, 1.5);
  return t;
}

ViTConfig small_cfg() {
  ViTConfig c;
  c.image_size = 32;
  c.patch_size = 8;
  c.embed_dim = 16;
  c.heads = 2;
  c.depth = 3;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  ViTConfig c = small_cfg();
  c.patch_size = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_cfg();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(small_cfg().tokens() == 16);
  ViTConfig d;
  CHECK(d.tokens() == 64);  // (64/8)^2 at defaults
}

TEST_CASE("patch_embed locality and positional embedding") {
  ViTConfig cfg = small_cfg();
  ParamStore store(3);
  Backbone bb(cfg, {}, cfg.depth - 1, store);

  Tensor zero = Tensor::zeros({1, 3, 32, 32});
  Tensor t0 = bb.patch_embed(zero);
  const Param* pos = store.find("backbone.pos_embed");
  REQUIRE(pos != nullptr);
  // zero image, zero projection bias: tokens equal positional embedding
  for (int64_t i = 0; i < t0.size(); ++i)
    CHECK(t0.at(i) == pos->value.at(i));

  Tensor a = random_image(32, 4);
  Tensor b = a.impl() ? Tensor::from_data(a.shape(), a.data()) : a;
  // change one pixel inside patch (1,2)
  b.at(1 * 32 * 32 + 10 * 32 + 20) += 1.0;
  Tensor ta = bb.patch_embed(a), tb = bb.patch_embed(b);
  const int D = cfg.embed_dim;
  for (int n = 0; n < cfg.tokens(); ++n) {
    bool differs = false;
    for (int d = 0; d < D; ++d)
      differs = differs || ta.at(n * D + d) != tb.at(n * D + d);
    CHECK(differs == (n == 1 * 4 + 2));
  }

  CHECK_THROWS_AS(bb.patch_embed(Tensor::zeros({1, 3, 16, 16})),
                  DimensionError);
}

TEST_CASE("encoder block ignores a zero perturbation") {
  ViTConfig cfg = small_cfg();
  ParamStore store(5);
  Backbone bb(cfg, {1}, cfg.depth - 1, store);
  Tensor img = random_image(32, 6);

  Tensor plain = bb.encode(img, nullptr).tokens;
  AdapterHook zero_hook = [&](int, const Tensor& tokens) -> QVPerturbation {
    return {Tensor::zeros(tokens.shape()), Tensor::zeros(tokens.shape())};
  };
  Tensor with_zero = bb.encode(img, zero_hook).tokens;
  CHECK(plain.data() == with_zero.data());
}

TEST_CASE("alpha = 0 makes any perturbation a bit-exact no-op") {
  ViTConfig cfg = small_cfg();
  ParamStore store(7);
  Backbone bb(cfg, {0, 1, 2}, cfg.depth - 1, store);
  Tensor img = random_image(32, 8);

  Rng rng(9);
  AdapterHook wild_hook = [&](int, const Tensor& tokens) -> QVPerturbation {
    Tensor dq = Tensor::zeros(tokens.shape());
    Tensor dv = Tensor::zeros(tokens.shape());
    for (auto& x : dq.data()) x = rng.uniform(-10.0, 10.0);
    for (auto& x : dv.data()) x = rng.uniform(-10.0, 10.0);
    return {dq, dv};
  };
  Tensor adapted = bb.encode(img, wild_hook).tokens;
  Tensor plain = bb.encode(img, nullptr).tokens;
  CHECK(adapted.data() == plain.data());  // bit-identical
}

TEST_CASE("tap equals the token sequence reshaped to the grid") {
  ViTConfig cfg = small_cfg();
  ParamStore store(10);
  Backbone bb(cfg, {}, cfg.depth - 1, store);
  Tensor img = random_image(32, 11);
  auto out = bb.encode(img, nullptr);
  CHECK(out.tap.shape() == Shape{1, cfg.embed_dim, 4, 4});
  Tensor back = ops::spatial_to_tokens(out.tap);
  CHECK(back.data() == out.tokens.data());
}

TEST_CASE("only alpha scalars are trainable; counts grow S < B < L") {
  ViTConfig cfg;  // depth 4
  ParamStore s0(1);
  Backbone b0(cfg, {3}, 3, s0);  // S analog: last 25%
  ParamStore s1(1);
  Backbone b1(cfg, {2, 3}, 3, s1);  // B analog: last 50%
  ParamStore s2(1);
  Backbone b2(cfg, {0, 1, 2, 3}, 3, s2);  // L analog: all
  CHECK(s0.trainable_count() < s1.trainable_count());
  CHECK(s1.trainable_count() < s2.trainable_count());
  CHECK(s0.trainable_count() == 1);
  CHECK(s2.trainable_count() == 4);
  for (const auto& p : s2.all())
    if (p.trainable) CHECK(p.name.find("alpha") != std::string::npos);
}

TEST_CASE("shared seed gives identical weights for shared parameter names") {
  ViTConfig cfg = small_cfg();
  ParamStore sa(77);
  Backbone a(cfg, {}, cfg.depth - 1, sa);
  ParamStore sb(77);
  Backbone b(cfg, {0, 2}, cfg.depth - 1, sb);
  for (const auto& p : sa.all()) {
    const Param* q = sb.find(p.name);
    REQUIRE(q != nullptr);
    CHECK(p.value.data() == q->value.data());
  }
}

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "wildsam/phase_io.hpp"

using namespace wildsam;
namespace fs = std::filesystem;
constexpr double kPi = std::numbers::pi;

TEST_CASE("wrap_scalar convention and periodicity") {
  CHECK(wrap_scalar(0.0) == 0.0);
  CHECK(wrap_scalar(kPi) == -kPi);  // half-open interval
  CHECK(wrap_scalar(4.0) == doctest::Approx(4.0 - 2 * kPi).epsilon(1e-14));
  for (double x : {-9.7, -3.0, 0.4, 2.9, 15.2}) {
    double w = wrap_scalar(x);
    CHECK(w >= -kPi);
    CHECK(w < kPi);
    CHECK(wrap_scalar(w) == w);  // idempotent
    for (int k : {-2, 1, 3})
      CHECK(wrap_scalar(x + 2 * kPi * k) == doctest::Approx(w).epsilon(1e-9));
  }
}

TEST_CASE("encode_channels values and pythagorean identity") {
  WrappedInterferogram ig;
  ig.height = 1;
  ig.width = 2;
  ig.phase = {0.0f, static_cast<float>(kPi / 2)};
  Tensor t = encode_channels(ig);
  CHECK(t.shape() == Shape{3, 1, 2});
  CHECK(t.at(0) == 0.0);
  CHECK(t.at(2) == 0.0);  // sin 0
  CHECK(t.at(4) == 1.0);  // cos 0
  CHECK(t.at(1) == doctest::Approx(kPi / 2));
  CHECK(t.at(3) == doctest::Approx(1.0));
  CHECK(t.at(5) == doctest::Approx(0.0).epsilon(1e-7));

  // near the wrap seam channel 0 jumps, channels 1-2 barely move
  WrappedInterferogram seam;
  seam.height = 1;
  seam.width = 2;
  seam.phase = {static_cast<float>(-kPi + 1e-4),
                static_cast<float>(kPi - 1e-4)};
  Tensor s = encode_channels(seam);
  CHECK(std::abs(s.at(1) - s.at(0)) > 6.0);
  CHECK(std::abs(s.at(3) - s.at(2)) < 1e-3);
  CHECK(std::abs(s.at(5) - s.at(4)) < 1e-3);

  for (int64_t i = 0; i < 2; ++i)
    CHECK(s.at(2 + i) * s.at(2 + i) + s.at(4 + i) * s.at(4 + i) ==
          doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("normalization maps range endpoints and round-trips") {
  WrappedInterferogram ig;
  ig.height = 1;
  ig.width = 3;
  ig.phase = {static_cast<float>(-kPi), 0.0f, 1.0f};
  Tensor t = encode_channels(ig);
  Tensor n = normalize_for_backbone(t);
  // channel 0 at -pi maps to 0 on the [0,255] scale
  CHECK(n.at(0) == doctest::Approx((0.0 - kNormMean) / kNormStd));
  // sin 0 = 0 maps to the midpoint 127.5
  CHECK(n.at(4) == doctest::Approx(0.0));
  Tensor back = denormalize_for_backbone(n);
  for (int64_t i = 0; i < t.size(); ++i)
    CHECK(back.at(i) == doctest::Approx(t.at(i)).epsilon(1e-6));
}

TEST_CASE("resize_longest_side") {
  Tensor sq = Tensor::full({3, 64, 64}, 0.25);
  Tensor same = resize_longest_side(sq, 64);
  CHECK(same.shape() == Shape{3, 64, 64});
  for (int64_t i = 0; i < same.size(); ++i) CHECK(same.at(i) == doctest::Approx(0.25));

  Tensor rect = Tensor::full({3, 100, 50}, 1.0);
  Tensor out = resize_longest_side(rect, 64);
  CHECK(out.shape() == Shape{3, 64, 64});
  // content area is 64x32; the rest holds the normalized-zero padding
  CHECK(out.at(0) == doctest::Approx(1.0));
  const double pad = (0.0 - kNormMean) / kNormStd;
  CHECK(out.at(63) == doctest::Approx(pad));
}

TEST_CASE("synth_scene determinism and structure") {
  SceneParams p;
  PatchRecord a = synth_scene(42, p, 48, 48);
  PatchRecord b = synth_scene(42, p, 48, 48);
  CHECK(a.same_payload(b));
  CHECK(a.interferogram.phase == b.interferogram.phase);
  CHECK(a.mask.values == b.mask.values);
  PatchRecord c = synth_scene(43, p, 48, 48);
  CHECK_FALSE(a.interferogram.phase == c.interferogram.phase);

  for (float v : a.interferogram.phase) {
    CHECK(v >= -static_cast<float>(kPi));
    CHECK(v < static_cast<float>(kPi));
  }
  for (uint8_t m : a.mask.values) CHECK((m == 0 || m == 1));
}

TEST_CASE("ramp-only scene has an empty mask") {
  SceneParams p;
  p.n_bowls = 0;
  p.noise_sigma_lo = p.noise_sigma_hi = 0.0;
  PatchRecord r = synth_scene(7, p, 32, 32);
  for (uint8_t m : r.mask.values) CHECK(m == 0);
}

TEST_CASE("strong single bowl produces a nonempty mask containing its peak") {
  SceneParams p;
  p.n_bowls = 1;
  p.amp_lo = p.amp_hi = 4.5;  // 3x the default threshold
  p.noise_sigma_lo = p.noise_sigma_hi = 0.0;
  PatchRecord r = synth_scene(5, p, 48, 48);
  int count = 0;
  for (uint8_t m : r.mask.values) count += m;
  CHECK(count > 0);
}

TEST_CASE("mask size is nonincreasing in the threshold") {
  SceneParams p;
  int prev = 48 * 48 + 1;
  for (double thr : {0.5, 1.0, 1.5, 2.5}) {
    p.mask_threshold = thr;
    PatchRecord r = synth_scene(11, p, 48, 48);
    int count = 0;
    for (uint8_t m : r.mask.values) count += m;
    CHECK(count <= prev);
    prev = count;
  }
}

TEST_CASE("igram round trip is bit-exact and the header is 32 bytes") {
  SceneParams p;
  PatchRecord r = synth_scene(99, p, 20, 24);
  const std::string path = "test_roundtrip.igram";
  write_patch(r, path);
  CHECK(fs::file_size(path) == 32 + 20 * 24 * 4 + 20 * 24);
  PatchRecord back = read_patch(path);
  CHECK(back.same_payload(r));
  CHECK(back.seed == r.seed);
  std::remove(path.c_str());
}

TEST_CASE("igram rejects bad magic and truncation with format errors") {
  SceneParams p;
  PatchRecord r = synth_scene(1, p, 8, 8);
  const std::string path = "test_bad.igram";
  write_patch(r, path);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(read_patch(path), FormatError);

  write_patch(r, path);
  fs::resize_file(path, 32 + 10);
  CHECK_THROWS_AS(read_patch(path), FormatError);
  fs::resize_file(path, 16);
  CHECK_THROWS_AS(read_patch(path), FormatError);
  std::remove(path.c_str());
}

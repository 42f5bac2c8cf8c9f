#include "wildsam/phase_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>

#include "wildsam/ops.hpp"
#include "wildsam/rng.hpp"

namespace wildsam {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Largest float strictly inside (-pi, pi); used when float rounding would
// push a wrapped value onto or past the boundary.
constexpr float kPiInsideF = 3.1415925f;

float quantize_phase(double v) {
  float f = static_cast<float>(v);
  if (static_cast<double>(f) >= kPi) f = kPiInsideF;
  if (static_cast<double>(f) < -kPi) f = -kPiInsideF;
  return f;
}

}  // namespace

double wrap_scalar(double phase) {
  double v = phase - kTwoPi * std::floor((phase + kPi) / kTwoPi);
  // floor rounding can land exactly on +pi for inputs near the seam
  if (v >= kPi) v -= kTwoPi;
  if (v < -kPi) v += kTwoPi;
  return v;
}

void SceneParams::validate() const {
  auto ok_range = [](double lo, double hi) {
    return lo >= 0.0 && hi >= lo;
  };
  if (n_bowls < 0) throw ConfigError("scene: n_bowls must be >= 0");
  if (!ok_range(amp_lo, amp_hi)) throw ConfigError("scene: bad amp_range");
  if (!(sigma_lo > 0.0 && sigma_hi >= sigma_lo))
    throw ConfigError("scene: bad sigma_range");
  if (!ok_range(ramp_grad_lo, ramp_grad_hi))
    throw ConfigError("scene: bad ramp_grad_range");
  if (!ok_range(noise_sigma_lo, noise_sigma_hi))
    throw ConfigError("scene: bad noise_sigma_range");
  if (!(mask_threshold > 0.0))
    throw ConfigError("scene: mask_threshold must be > 0");
}

bool PatchRecord::same_payload(const PatchRecord& o) const {
  return interferogram.height == o.interferogram.height &&
         interferogram.width == o.interferogram.width &&
         interferogram.phase == o.interferogram.phase &&
         mask.values == o.mask.values && seed == o.seed;
}

WrappedInterferogram wrap(int height, int width,
                          const std::vector<double>& phase) {
  if (static_cast<int64_t>(phase.size()) !=
      static_cast<int64_t>(height) * width)
    throw DimensionError("wrap: phase size mismatch");
  WrappedInterferogram ig;
  ig.height = height;
  ig.width = width;
  ig.phase.resize(phase.size());
  for (size_t i = 0; i < phase.size(); ++i)
    ig.phase[i] = quantize_phase(wrap_scalar(phase[i]));
  return ig;
}

Tensor encode_channels(const WrappedInterferogram& ig) {
  const int H = ig.height, W = ig.width;
  Tensor t = Tensor::zeros({3, H, W});
  const int64_t hw = static_cast<int64_t>(H) * W;
  for (int64_t i = 0; i < hw; ++i) {
    const double phi = static_cast<double>(ig.phase[static_cast<size_t>(i)]);
    t.at(i) = phi;
    t.at(hw + i) = std::sin(phi);
    t.at(2 * hw + i) = std::cos(phi);
  }
  return t;
}

Tensor normalize_for_backbone(const Tensor& triple) {
  if (triple.ndim() != 3 || triple.dim(0) != 3)
    throw DimensionError("normalize_for_backbone: expected [3,H,W]");
  Tensor out = Tensor::zeros(triple.shape());
  const int64_t hw = triple.size() / 3;
  for (int64_t i = 0; i < triple.size(); ++i) {
    const int c = static_cast<int>(i / hw);
    const double v = triple.at(i);
    // channel 0 spans [-pi, pi); channels 1-2 span [-1, 1]
    const double lo = (c == 0) ? -kPi : -1.0;
    const double hi = (c == 0) ? kPi : 1.0;
    const double byte_scale = (v - lo) / (hi - lo) * 255.0;
    out.at(i) = (byte_scale - kNormMean) / kNormStd;
  }
  return out;
}

Tensor denormalize_for_backbone(const Tensor& normalized) {
  if (normalized.ndim() != 3 || normalized.dim(0) != 3)
    throw DimensionError("denormalize_for_backbone: expected [3,H,W]");
  Tensor out = Tensor::zeros(normalized.shape());
  const int64_t hw = normalized.size() / 3;
  for (int64_t i = 0; i < normalized.size(); ++i) {
    const int c = static_cast<int>(i / hw);
    const double lo = (c == 0) ? -kPi : -1.0;
    const double hi = (c == 0) ? kPi : 1.0;
    const double byte_scale = normalized.at(i) * kNormStd + kNormMean;
    out.at(i) = byte_scale / 255.0 * (hi - lo) + lo;
  }
  return out;
}

Tensor resize_longest_side(const Tensor& img, int target) {
  if (img.ndim() != 3) throw DimensionError("resize_longest_side: [C,H,W]");
  if (target < 1) throw UsageError("resize_longest_side: target must be >= 1");
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  const int longest = std::max(H, W);
  const int h2 = std::max(1, static_cast<int>(std::lround(
                                 static_cast<double>(H) * target / longest)));
  const int w2 = std::max(1, static_cast<int>(std::lround(
                                 static_cast<double>(W) * target / longest)));
  Tensor content =
      ops::bilinear_resize(ops::reshape(img, {1, C, H, W}), h2, w2);
  const double pad = (0.0 - kNormMean) / kNormStd;
  Tensor out = Tensor::full({C, target, target}, pad);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h2; ++y)
      for (int x = 0; x < w2; ++x)
        out.at((static_cast<int64_t>(c) * target + y) * target + x) =
            content.at((static_cast<int64_t>(c) * h2 + y) * w2 + x);
  return out;
}

PatchRecord synth_scene(uint64_t seed, const SceneParams& p, int height,
                        int width) {
  p.validate();
  Rng rng(seed ^ 0x49475241ULL);  // "IGRA" salt
  const int64_t hw = static_cast<int64_t>(height) * width;

  // Background ramp with a random direction.
  const double grad = rng.uniform(p.ramp_grad_lo, p.ramp_grad_hi);
  const double theta = rng.uniform(0.0, kTwoPi);
  const double gx = grad * std::cos(theta), gy = grad * std::sin(theta);

  struct Bowl {
    double cx, cy, amp, sigma;
  };
  std::vector<Bowl> bowls;
  for (int i = 0; i < p.n_bowls; ++i) {
    Bowl b;
    b.cx = rng.uniform(0.15, 0.85) * width;
    b.cy = rng.uniform(0.15, 0.85) * height;
    b.amp = rng.uniform(p.amp_lo, p.amp_hi) * (rng.uniform() < 0.5 ? -1 : 1);
    b.sigma = rng.uniform(p.sigma_lo, p.sigma_hi);
    bowls.push_back(b);
  }
  const double noise_sigma = rng.uniform(p.noise_sigma_lo, p.noise_sigma_hi);

  std::vector<double> raw(static_cast<size_t>(hw));
  PatchRecord rec;
  rec.mask.height = height;
  rec.mask.width = width;
  rec.mask.values.resize(static_cast<size_t>(hw));
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double d = 0.0;
      for (const Bowl& b : bowls) {
        const double dx = x - b.cx, dy = y - b.cy;
        d += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      }
      const double noise = noise_sigma > 0.0 ? noise_sigma * rng.normal() : 0.0;
      const int64_t i = static_cast<int64_t>(y) * width + x;
      raw[static_cast<size_t>(i)] = gx * x + gy * y + d + noise;
      rec.mask.values[static_cast<size_t>(i)] =
          std::abs(d) > p.mask_threshold ? 1 : 0;
    }
  rec.interferogram = wrap(height, width, raw);
  rec.seed = seed;
  rec.scene_params = p;
  return rec;
}

namespace {

constexpr char kMagic[4] = {'I', 'G', 'R', 'M'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));  // little-endian host assumed
}

template <typename T>
T take(const std::string& buf, size_t& off, const std::string& path) {
  if (off + sizeof(T) > buf.size())
    throw FormatError(path + ": truncated at byte offset " +
                      std::to_string(off));
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void write_patch(const PatchRecord& r, const std::string& path) {
  const int H = r.interferogram.height, W = r.interferogram.width;
  if (r.mask.height != H || r.mask.width != W)
    throw DimensionError("write_patch: interferogram/mask size mismatch");
  std::string buf;
  buf.append(kMagic, 4);
  put<uint32_t>(buf, kVersion);
  put<uint32_t>(buf, static_cast<uint32_t>(H));
  put<uint32_t>(buf, static_cast<uint32_t>(W));
  put<uint64_t>(buf, r.seed);
  put<uint64_t>(buf, 0);  // reserved
  for (float f : r.interferogram.phase) put<float>(buf, f);
  buf.append(reinterpret_cast<const char*>(r.mask.values.data()),
             r.mask.values.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("write_patch: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("write_patch: write failed for " + path);
}

PatchRecord read_patch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("read_patch: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  size_t off = 0;
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError(path + ": bad magic at byte offset 0");
  off = 4;
  const uint32_t version = take<uint32_t>(buf, off, path);
  if (version != kVersion)
    throw FormatError(path + ": unsupported version " +
                      std::to_string(version) + " at byte offset 4");
  const uint32_t H = take<uint32_t>(buf, off, path);
  const uint32_t W = take<uint32_t>(buf, off, path);
  const uint64_t seed = take<uint64_t>(buf, off, path);
  (void)take<uint64_t>(buf, off, path);  // reserved
  const int64_t hw = static_cast<int64_t>(H) * W;
  PatchRecord r;
  r.interferogram.height = static_cast<int>(H);
  r.interferogram.width = static_cast<int>(W);
  r.interferogram.phase.resize(static_cast<size_t>(hw));
  for (int64_t i = 0; i < hw; ++i)
    r.interferogram.phase[static_cast<size_t>(i)] =
        take<float>(buf, off, path);
  if (off + static_cast<size_t>(hw) > buf.size())
    throw FormatError(path + ": truncated at byte offset " +
                      std::to_string(off));
  r.mask.height = static_cast<int>(H);
  r.mask.width = static_cast<int>(W);
  r.mask.values.resize(static_cast<size_t>(hw));
  std::memcpy(r.mask.values.data(), buf.data() + off,
              static_cast<size_t>(hw));
  r.seed = seed;
  return r;
}

}  // namespace wildsam

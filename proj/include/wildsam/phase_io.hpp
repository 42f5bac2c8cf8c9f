#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wildsam/tensor.hpp"

// Wrapped-phase input encoding, normalization, the IGRAM patch container,
// and the seeded synthetic interferogram generator.

namespace wildsam {

// Fixed normalization constants applied after the [0,255] mapping
// (mean 127.5, std of a uniform [0,255] distribution).
constexpr double kNormMean = 127.5;
constexpr double kNormStd = 73.9;

// Half-open wrap convention: result in [-pi, pi), pi maps to -pi.
double wrap_scalar(double phase);

struct WrappedInterferogram {
  int height = 0;
  int width = 0;
  // Stored at float32 precision so IGRAM round trips are bit-exact.
  std::vector<float> phase;  // row-major, radians in [-pi, pi)
};

struct LandslideMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> values;  // strictly {0,1}
};

// Defaults are calibrated for the desk-scale benchmark: bowls strong enough
// to segment reliably, a wide noise range (clean through heavily speckled)
// so feature quality matters, and a threshold on the steep part of the bowl.
struct SceneParams {
  int n_bowls = 2;
  double amp_lo = 5.0, amp_hi = 9.0;          // radians
  double sigma_lo = 12.0, sigma_hi = 20.0;    // pixels
  double ramp_grad_lo = 0.0, ramp_grad_hi = 0.05;  // radians/pixel
  double noise_sigma_lo = 0.0, noise_sigma_hi = 1.0;  // radians
  double mask_threshold = 1.5;  // radians, on |deformation|

  void validate() const;
  bool operator==(const SceneParams&) const = default;
};

struct PatchRecord {
  WrappedInterferogram interferogram;
  LandslideMask mask;
  uint64_t seed = 0;          // 0 for external data
  SceneParams scene_params{};  // generator snapshot; default for external data

  bool same_payload(const PatchRecord& o) const;
};

// phase: H x W radians, arbitrary finite values.
WrappedInterferogram wrap(int height, int width,
                          const std::vector<double>& phase);

// Seam-free 3-channel encoding: [phi, sin(phi), cos(phi)] as a [3,H,W] tensor.
Tensor encode_channels(const WrappedInterferogram& ig);

// Per-channel affine map of the theoretical range onto [0,255], then
// (x - mean)/std with the fixed constants above.
Tensor normalize_for_backbone(const Tensor& triple);
Tensor denormalize_for_backbone(const Tensor& normalized);

// Aspect-preserving bilinear resize so max(H',W') == target, padded to a
// target x target square with the normalized-zero value.
Tensor resize_longest_side(const Tensor& img, int target);

PatchRecord synth_scene(uint64_t seed, const SceneParams& p, int height,
                        int width);

// IGRAM container: "IGRM", u32 version=1, u32 height, u32 width, u64 seed,
// u64 reserved (32-byte header), float32 phase row-major, uint8 mask.
void write_patch(const PatchRecord& r, const std::string& path);
PatchRecord read_patch(const std::string& path);

}  // namespace wildsam

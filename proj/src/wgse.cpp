#include "wildsam/wgse.hpp"

#include <cmath>

namespace wildsam {

using namespace ops;

WgsePrompt::WgsePrompt(const std::string& prefix, int channels, int band_dim,
                       int out_dim, int grid_h, int grid_w, ParamStore& store)
    : channels_(channels),
      band_dim_(band_dim),
      out_dim_(out_dim),
      grid_h_(grid_h),
      grid_w_(grid_w) {
  if (channels < 1 || band_dim < 4 || band_dim % 4 != 0)
    throw ConfigError("wgse: band_dim must be a positive multiple of 4");
  const int c = channels;
  const char* band_name[3] = {"lh", "hl", "hh"};
  for (int b = 0; b < 3; ++b) {
    const std::string bp = prefix + ".afm." + band_name[b];
    if (b == 2) {
      afm_w1_[b] = store.create_kaiming(bp + ".w1", {c, 1, 3, 3}, 9, true);
      afm_b1_[b] = store.create_zeros(bp + ".b1", {c}, true);
    } else {
      Shape k1 = (b == 0) ? Shape{c, c, 1, 5} : Shape{c, c, 5, 1};
      Shape k2 = (b == 0) ? Shape{c, c, 5, 1} : Shape{c, c, 1, 5};
      afm_w1_[b] = store.create_kaiming(bp + ".w1", k1,
                                        static_cast<int64_t>(c) * 5, true);
      afm_b1_[b] = store.create_zeros(bp + ".b1", {c}, true);
      afm_w2_[b] = store.create_kaiming(bp + ".w2", k2,
                                        static_cast<int64_t>(c) * 5, true);
      afm_b2_[b] = store.create_zeros(bp + ".b2", {c}, true);
    }
    afm_proj_w_[b] = store.create_kaiming(bp + ".proj.w",
                                          {band_dim, c, 1, 1}, c, true);
    afm_proj_b_[b] = store.create_zeros(bp + ".proj.b", {band_dim}, true);
  }
  wq_ = store.create_kaiming(prefix + ".scb.wq", {band_dim, band_dim},
                             band_dim, true);
  wk_ = store.create_kaiming(prefix + ".scb.wk", {band_dim, band_dim},
                             band_dim, true);
  wv_ = store.create_kaiming(prefix + ".scb.wv", {band_dim, band_dim},
                             band_dim, true);
  // zero output projection makes the bridge the identity at init
  wo_ = store.create_zeros(prefix + ".scb.wo", {band_dim, band_dim}, true);
  wo_b_ = store.create_zeros(prefix + ".scb.wo_b", {band_dim}, true);

  const int wide = 3 * band_dim;
  const int mid = wide / 4;
  se_w1_ = store.create_kaiming(prefix + ".se.w1", {wide, mid}, wide, true);
  se_b1_ = store.create_zeros(prefix + ".se.b1", {mid}, true);
  se_w2_ = store.create_kaiming(prefix + ".se.w2", {mid, wide}, mid, true);
  se_b2_ = store.create_zeros(prefix + ".se.b2", {wide}, true);

  // zero output projection: the dense prompt is silent at init, so the model
  // starts on the prompt-free trajectory and grows the prompt only where it
  // lowers the loss (a randomly initialized prompt perturbs the decoder input
  // with features of the frozen backbone's noise and hurts final quality)
  proj_w_ = store.create_zeros(prefix + ".proj.w", {out_dim, wide, 1, 1},
                               true);
  proj_b_ = store.create_zeros(prefix + ".proj.b", {out_dim}, true);
}

Tensor WgsePrompt::afm(const Tensor& subband, int band) const {
  if (band < 0 || band > 2) throw UsageError("wgse afm: band out of range");
  Tensor h;
  if (band == 2) {
    h = conv2d(subband, afm_w1_[2], afm_b1_[2], channels_, 1, 1, 1);
  } else if (band == 0) {
    h = conv2d(subband, afm_w1_[0], afm_b1_[0], 1, 1, 0, 2);
    h = conv2d(h, afm_w2_[0], afm_b2_[0], 1, 1, 2, 0);
  } else {
    h = conv2d(subband, afm_w1_[1], afm_b1_[1], 1, 1, 2, 0);
    h = conv2d(h, afm_w2_[1], afm_b2_[1], 1, 1, 0, 2);
  }
  h = gelu(conv2d(h, afm_proj_w_[band], afm_proj_b_[band], 1, 1, 0, 0));
  return spatial_to_tokens(h);
}

Tensor WgsePrompt::scb(const Tensor& f_band, const Tensor& context) const {
  if (f_band.ndim() != 3 || context.ndim() != 3 ||
      f_band.dim(2) != context.dim(2))
    throw DimensionError("wgse scb: token feature widths differ");
  Tensor q = matmul(f_band, wq_);
  Tensor k = matmul(context, wk_);
  Tensor v = matmul(context, wv_);
  Tensor attended = scaled_dot_attention(q, k, v);
  return add(f_band, add_bias(matmul(attended, wo_), wo_b_));
}

Tensor WgsePrompt::se_gate(const Tensor& f) const {
  Tensor pooled = mean_tokens(f);  // [B,3Dw]
  Tensor s = sigmoid(add_bias(
      matmul(gelu(add_bias(matmul(pooled, se_w1_), se_b1_)), se_w2_),
      se_b2_));
  return mul_channels(f, s);
}

Tensor WgsePrompt::to_dense_prompt(const Tensor& f, int half_h,
                                   int half_w) const {
  if (f.dim(1) != half_h * half_w)
    throw DimensionError("wgse: token count does not match subband grid");
  Tensor spatial = tokens_to_spatial(f, half_h, half_w);
  Tensor proj = conv2d(spatial, proj_w_, proj_b_, 1, 1, 0, 0);
  return bilinear_resize(proj, grid_h_, grid_w_);
}

Tensor WgsePrompt::forward(const Tensor& x) const {
  Subbands sb = dwt_haar(x);  // LL is discarded
  Tensor f_lh = afm(sb.lh, 0);
  Tensor f_hl = afm(sb.hl, 1);
  Tensor f_hh = afm(sb.hh, 2);
  Tensor context = concat({f_lh, f_hl, f_hh}, 1);
  Tensor e_lh = scb(f_lh, context);
  Tensor e_hl = scb(f_hl, context);
  Tensor e_hh = scb(f_hh, context);
  Tensor fused = se_gate(concat({e_lh, e_hl, e_hh}, 2));
  return to_dense_prompt(fused, x.dim(2) / 2, x.dim(3) / 2);
}

}  // namespace wildsam

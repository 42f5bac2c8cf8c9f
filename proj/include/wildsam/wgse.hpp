#pragma once

#include "wildsam/ops.hpp"
#include "wildsam/params.hpp"
#include "wildsam/tensor.hpp"

namespace wildsam {

// Wavelet-guided dense prompt generator. A tap feature map is decomposed by
// a single-level Haar transform; the three high-frequency subbands (LL is
// discarded) pass through direction-matched modulators, a residual
// cross-attention bridge over the concatenated band tokens, an SE gate, and
// a 1x1 projection back to the embedding grid.
class WgsePrompt {
 public:
  // channels: tap feature channels C; band_dim: token width D_w;
  // out_dim/grid: shape of the emitted dense prompt.
  WgsePrompt(const std::string& prefix, int channels, int band_dim,
             int out_dim, int grid_h, int grid_w, ParamStore& store);

  // x: [B,C,H,W] with H, W even. band selects the modulator:
  // 0 = LH (1x5 then 5x1), 1 = HL (5x1 then 1x5), 2 = HH (depthwise 3x3).
  // Output tokens [B,(H/2)(W/2),D_w].
  Tensor afm(const Tensor& subband, int band) const;

  // Residual single-head cross-attention of band tokens against the shared
  // context (token-wise concat of all band tokens). The output projection
  // starts at zero, so this is the identity at init.
  Tensor scb(const Tensor& f_band, const Tensor& context) const;

  // Channel gate over the 3*D_w concatenated features.
  Tensor se_gate(const Tensor& f) const;

  // Tokens [B,N_s,3*D_w] -> [B,out_dim,grid_h,grid_w].
  Tensor to_dense_prompt(const Tensor& f, int half_h, int half_w) const;

  // Full pipeline: [B,C,H,W] -> dense prompt on the embedding grid.
  Tensor forward(const Tensor& x) const;

 private:
  int channels_, band_dim_, out_dim_, grid_h_, grid_w_;
  // per-band modulators: two directional convs then 1x1 C->D_w
  Tensor afm_w1_[3], afm_b1_[3], afm_w2_[3], afm_b2_[3];
  Tensor afm_proj_w_[3], afm_proj_b_[3];
  // cross-attention projections, shared across bands
  Tensor wq_, wk_, wv_, wo_, wo_b_;
  // SE gate
  Tensor se_w1_, se_b1_, se_w2_, se_b2_;
  // final projection 3*D_w -> out_dim
  Tensor proj_w_, proj_b_;
};

}  // namespace wildsam

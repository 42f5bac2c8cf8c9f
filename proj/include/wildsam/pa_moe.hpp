#pragma once

#include <array>

#include "wildsam/backbone.hpp"
#include "wildsam/params.hpp"
#include "wildsam/tensor.hpp"

namespace wildsam {

// Phase-Aware Mixture-of-Experts adapter: four heterogeneous convolutional
// experts behind a GAP->bottleneck->softmax router, a soft-routed fusion,
// and a 1x1 head projecting to Query/Value perturbations.
//
// Experts:
//   E1 depthwise 3x3, E2 3x3 dilation 2, E3 1x5 then 5x1,
//   E4 fixed depthwise Laplacian 3x3 followed by a learnable 1x1.
// Disabled experts (expert_mask) are not created; the router's logits for
// them are masked out so the routing weights stay on the simplex over the
// active subset.
class PaMoeAdapter {
 public:
  // channels: feature channels C (= embed dim of the host block);
  // grid_h/w: token grid; embed_dim: D of the Q/V perturbations.
  PaMoeAdapter(const std::string& prefix, int channels, int grid_h, int grid_w,
               int embed_dim, std::array<bool, 4> expert_mask,
               ParamStore& store, int bottleneck_ratio = 4);

  // [B,C,H,W] -> [B,4] routing weights on the simplex.
  Tensor route(const Tensor& x) const;
  // Applies expert i (0-based); throws if the expert is disabled.
  Tensor expert(int i, const Tensor& x) const;
  // Y = sum_i w_i * E_i(x) over active experts.
  Tensor fuse(const Tensor& x, const Tensor& weights) const;
  // 1x1 head to 2D channels, split and flattened into token space.
  QVPerturbation perturb_head(const Tensor& y) const;
  // tokens [B,N,D] -> route -> fuse -> head. Alpha scaling is applied by
  // the host block, not here.
  QVPerturbation forward(const Tensor& tokens) const;

  const std::array<bool, 4>& mask() const { return mask_; }

 private:
  int channels_, grid_h_, grid_w_, embed_dim_;
  std::array<bool, 4> mask_;
  // E1
  Tensor e1_w_, e1_b_;
  // E2
  Tensor e2_w_, e2_b_;
  // E3
  Tensor e3_w1_, e3_b1_, e3_w2_, e3_b2_;
  // E4
  Tensor e4_lap_, e4_w_, e4_b_;
  // router
  Tensor r_w1_, r_b1_, r_w2_;
  // projection head
  Tensor head_w_, head_b_;
};

}  // namespace wildsam

#pragma once

#include <functional>
#include <set>
#include <vector>

#include "wildsam/params.hpp"
#include "wildsam/tensor.hpp"

namespace wildsam {

struct ViTConfig {
  int image_size = 64;
  int patch_size = 8;
  int embed_dim = 64;
  int heads = 4;
  int depth = 4;
  int mlp_ratio = 4;

  void validate() const;
  int grid() const { return image_size / patch_size; }
  int tokens() const { return grid() * grid(); }
  bool operator==(const ViTConfig&) const = default;
};

struct QVPerturbation {
  Tensor dq, dv;  // [B,N,D] each
  bool present() const { return dq.defined(); }
};

// Called for each adapted block with the block's (pre-norm) input tokens.
using AdapterHook =
    std::function<QVPerturbation(int block_index, const Tensor& tokens)>;

// Pre-norm transformer block. All weights are frozen; the per-block alpha
// scalar (created only for adapted blocks) is the sole trainable parameter
// and scales the injected Q/V perturbation.
class EncoderBlock {
 public:
  EncoderBlock(const ViTConfig& cfg, int index, bool adapted,
               ParamStore& store);

  Tensor forward(const Tensor& x, const QVPerturbation* perturb) const;
  bool adapted() const { return alpha_.defined(); }
  Tensor alpha() const { return alpha_; }

 private:
  int heads_;
  Tensor ln1_g_, ln1_b_, wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
  Tensor ln2_g_, ln2_b_, mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
  Tensor alpha_;  // undefined for non-adapted blocks
};

// Toy frozen ViT encoder with Q/V injection hooks and a spatial feature tap.
class Backbone {
 public:
  Backbone(const ViTConfig& cfg, const std::set<int>& adapter_layers,
           int tap_block, ParamStore& store);

  // img: [B,3,S,S] -> tokens [B,N,D]
  Tensor patch_embed(const Tensor& img) const;

  struct EncodeOut {
    Tensor tokens;  // [B,N,D] final block output
    Tensor tap;     // [B,D,h,w] spatial reshape of the tap block's output
  };
  EncodeOut encode(const Tensor& img, const AdapterHook& hook) const;

  const ViTConfig& config() const { return cfg_; }
  const std::set<int>& adapter_layers() const { return adapter_layers_; }
  const std::vector<EncoderBlock>& blocks() const { return blocks_; }

 private:
  ViTConfig cfg_;
  std::set<int> adapter_layers_;
  int tap_block_;
  Tensor patch_w_, patch_b_, pos_embed_;
  std::vector<EncoderBlock> blocks_;
};

}  // namespace wildsam

#pragma once

#include <array>
#include <map>
#include <memory>
#include <set>

#include "wildsam/backbone.hpp"
#include "wildsam/decoder.hpp"
#include "wildsam/pa_moe.hpp"
#include "wildsam/params.hpp"
#include "wildsam/wgse.hpp"

namespace wildsam {

struct ModelConfig {
  ViTConfig vit{};
  std::set<int> adapter_layers{};       // empty = no adapter
  std::array<bool, 4> expert_mask{true, true, true, true};
  bool wgse_enabled = true;
  int tap_block = -1;  // -1 = final block

  void validate() const;
  int resolved_tap() const {
    return tap_block < 0 ? vit.depth - 1 : tap_block;
  }
};

// Full segmentation model: frozen encoder with per-block expert adapters,
// wavelet prompt generator, and mask head. Parameter initialization depends
// only on (seed, parameter name), so two models built from the same seed
// share identical weights for every parameter they have in common.
class WildSamModel {
 public:
  WildSamModel(const ModelConfig& cfg, uint64_t seed);

  // img: normalized [B,3,S,S]. Returns pixel logits [B,S,S].
  Tensor forward(const Tensor& img) const;

  struct ForwardDetail {
    Tensor logits;  // [B,S,S]
    Tensor tap;     // [B,D,h,w] feature feeding the prompt generator
    Tensor prompt;  // [B,D,h,w]; undefined when the generator is disabled
  };
  ForwardDetail forward_detail(const Tensor& img) const;

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const Backbone& backbone() const { return *backbone_; }
  const WgsePrompt* wgse() const { return wgse_.get(); }
  const PaMoeAdapter* adapter(int block) const;

 private:
  ModelConfig cfg_;
  ParamStore store_;
  std::unique_ptr<Backbone> backbone_;
  std::map<int, std::unique_ptr<PaMoeAdapter>> adapters_;
  std::unique_ptr<WgsePrompt> wgse_;
  std::unique_ptr<MaskDecoder> decoder_;
};

}  // namespace wildsam

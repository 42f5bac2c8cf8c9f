#include "wildsam/model.hpp"

#include "wildsam/ops.hpp"

namespace wildsam {

void ModelConfig::validate() const {
  vit.validate();
  for (int b : adapter_layers)
    if (b < 0 || b >= vit.depth)
      throw ConfigError("adapter_layers index " + std::to_string(b) +
                        " outside [0," + std::to_string(vit.depth) + ")");
  if (!adapter_layers.empty()) {
    bool any = false;
    for (bool m : expert_mask) any = any || m;
    if (!any)
      throw ConfigError("expert_mask needs >=1 active expert when adapters "
                        "are enabled");
  }
  if (tap_block >= vit.depth)
    throw ConfigError("tap_block outside encoder depth");
}

WildSamModel::WildSamModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_(cfg), store_(seed) {
  cfg_.validate();
  backbone_ = std::make_unique<Backbone>(cfg_.vit, cfg_.adapter_layers,
                                         cfg_.resolved_tap(), store_);
  const int grid = cfg_.vit.grid();
  const int d = cfg_.vit.embed_dim;
  for (int b : cfg_.adapter_layers) {
    adapters_[b] = std::make_unique<PaMoeAdapter>(
        "adapter.block" + std::to_string(b), d, grid, grid, d,
        cfg_.expert_mask, store_);
  }
  if (cfg_.wgse_enabled)
    wgse_ = std::make_unique<WgsePrompt>("wgse", d, d, d, grid, grid, store_);
  decoder_ = std::make_unique<MaskDecoder>("decoder", d, cfg_.vit.image_size,
                                           store_);
}

const PaMoeAdapter* WildSamModel::adapter(int block) const {
  auto it = adapters_.find(block);
  return it == adapters_.end() ? nullptr : it->second.get();
}

Tensor WildSamModel::forward(const Tensor& img) const {
  return forward_detail(img).logits;
}

WildSamModel::ForwardDetail WildSamModel::forward_detail(
    const Tensor& img) const {
  AdapterHook hook;
  if (!adapters_.empty()) {
    hook = [this](int block, const Tensor& tokens) -> QVPerturbation {
      auto it = adapters_.find(block);
      if (it == adapters_.end()) return {};
      return it->second->forward(tokens);
    };
  }
  Backbone::EncodeOut enc = backbone_->encode(img, hook);
  Tensor embedding =
      ops::tokens_to_spatial(enc.tokens, cfg_.vit.grid(), cfg_.vit.grid());
  ForwardDetail out;
  out.tap = enc.tap;
  if (wgse_) out.prompt = wgse_->forward(enc.tap);
  out.logits = decoder_->decode(embedding, out.prompt);
  return out;
}

}  // namespace wildsam

#include "wildsam/backbone.hpp"

#include "wildsam/ops.hpp"

namespace wildsam {

void ViTConfig::validate() const {
  if (image_size < 1 || patch_size < 1 || embed_dim < 1 || heads < 1 ||
      depth < 1 || mlp_ratio < 1)
    throw ConfigError("vit: all dimensions must be positive");
  if (image_size % patch_size != 0)
    throw ConfigError("vit: image_size must be divisible by patch_size");
  if (embed_dim % heads != 0)
    throw ConfigError("vit: embed_dim must be divisible by heads");
}

namespace {

std::string bname(int index, const char* suffix) {
  return "backbone.block" + std::to_string(index) + "." + suffix;
}

}  // namespace

EncoderBlock::EncoderBlock(const ViTConfig& cfg, int index, bool adapted,
                           ParamStore& store)
    : heads_(cfg.heads) {
  const int d = cfg.embed_dim;
  const int m = d * cfg.mlp_ratio;
  ln1_g_ = store.create_const(bname(index, "ln1.gain"), {d}, 1.0, false);
  ln1_b_ = store.create_zeros(bname(index, "ln1.bias"), {d}, false);
  wq_ = store.create_kaiming(bname(index, "attn.wq"), {d, d}, d, false);
  bq_ = store.create_zeros(bname(index, "attn.bq"), {d}, false);
  wk_ = store.create_kaiming(bname(index, "attn.wk"), {d, d}, d, false);
  bk_ = store.create_zeros(bname(index, "attn.bk"), {d}, false);
  wv_ = store.create_kaiming(bname(index, "attn.wv"), {d, d}, d, false);
  bv_ = store.create_zeros(bname(index, "attn.bv"), {d}, false);
  wo_ = store.create_kaiming(bname(index, "attn.wo"), {d, d}, d, false);
  bo_ = store.create_zeros(bname(index, "attn.bo"), {d}, false);
  ln2_g_ = store.create_const(bname(index, "ln2.gain"), {d}, 1.0, false);
  ln2_b_ = store.create_zeros(bname(index, "ln2.bias"), {d}, false);
  mlp_w1_ = store.create_kaiming(bname(index, "mlp.w1"), {d, m}, d, false);
  mlp_b1_ = store.create_zeros(bname(index, "mlp.b1"), {m}, false);
  mlp_w2_ = store.create_kaiming(bname(index, "mlp.w2"), {m, d}, m, false);
  mlp_b2_ = store.create_zeros(bname(index, "mlp.b2"), {d}, false);
  if (adapted) {
    // alpha starts at 0 so training begins exactly at the frozen baseline.
    alpha_ = store.create_zeros(bname(index, "alpha"), {1}, true);
  }
}

Tensor EncoderBlock::forward(const Tensor& x,
                             const QVPerturbation* perturb) const {
  using namespace ops;
  Tensor h = layer_norm(x, ln1_g_, ln1_b_);
  Tensor q = add_bias(matmul(h, wq_), bq_);
  Tensor k = add_bias(matmul(h, wk_), bk_);
  Tensor v = add_bias(matmul(h, wv_), bv_);
  if (perturb && perturb->present()) {
    if (perturb->dq.shape() != q.shape() || perturb->dv.shape() != v.shape())
      throw DimensionError("encoder_block: perturbation shape mismatch");
    q = add(q, scale_by(perturb->dq, alpha_));
    v = add(v, scale_by(perturb->dv, alpha_));
  }
  Tensor att = scaled_dot_attention(split_heads(q, heads_),
                                    split_heads(k, heads_),
                                    split_heads(v, heads_));
  Tensor o = add_bias(matmul(merge_heads(att, heads_), wo_), bo_);
  Tensor x1 = add(x, o);
  Tensor h2 = layer_norm(x1, ln2_g_, ln2_b_);
  Tensor m = gelu(add_bias(matmul(h2, mlp_w1_), mlp_b1_));
  m = add_bias(matmul(m, mlp_w2_), mlp_b2_);
  return add(x1, m);
}

Backbone::Backbone(const ViTConfig& cfg, const std::set<int>& adapter_layers,
                   int tap_block, ParamStore& store)
    : cfg_(cfg), adapter_layers_(adapter_layers), tap_block_(tap_block) {
  cfg_.validate();
  for (int l : adapter_layers_)
    if (l < 0 || l >= cfg_.depth)
      throw ConfigError("adapter_layers: block index out of range");
  if (tap_block_ < 0 || tap_block_ >= cfg_.depth)
    throw ConfigError("tap_block out of range");
  const int d = cfg_.embed_dim;
  const int pf = 3 * cfg_.patch_size * cfg_.patch_size;
  patch_w_ = store.create_kaiming("backbone.patch.w", {pf, d}, pf, false);
  patch_b_ = store.create_zeros("backbone.patch.b", {d}, false);
  pos_embed_ = store.create_normal("backbone.pos_embed",
                                   {cfg_.tokens(), d}, 0.02, false);
  blocks_.reserve(static_cast<size_t>(cfg_.depth));
  for (int i = 0; i < cfg_.depth; ++i)
    blocks_.emplace_back(cfg_, i, adapter_layers_.count(i) > 0, store);
}

Tensor Backbone::patch_embed(const Tensor& img) const {
  if (img.ndim() != 4 || img.dim(1) != 3 || img.dim(2) != cfg_.image_size ||
      img.dim(3) != cfg_.image_size)
    throw DimensionError("patch_embed: expected [B,3," +
                         std::to_string(cfg_.image_size) + "," +
                         std::to_string(cfg_.image_size) + "], got " +
                         shape_str(img.shape()));
  using namespace ops;
  const int B = img.dim(0);
  Tensor tokens = add_bias(
      matmul(extract_patches(img, cfg_.patch_size), patch_w_), patch_b_);
  // pos embedding is frozen, so a materialized batch tile needs no grad
  Tensor pos = Tensor::zeros({B, cfg_.tokens(), cfg_.embed_dim});
  const int64_t stride = pos_embed_.size();
  for (int b = 0; b < B; ++b)
    std::copy(pos_embed_.data().begin(), pos_embed_.data().end(),
              pos.data().begin() + b * stride);
  return add(tokens, pos);
}

Backbone::EncodeOut Backbone::encode(const Tensor& img,
                                     const AdapterHook& hook) const {
  Tensor x = patch_embed(img);
  Tensor tap;
  for (int i = 0; i < cfg_.depth; ++i) {
    QVPerturbation p;
    const bool use_adapter = hook && adapter_layers_.count(i) > 0;
    if (use_adapter) p = hook(i, x);
    x = blocks_[static_cast<size_t>(i)].forward(x, use_adapter ? &p : nullptr);
    if (i == tap_block_)
      tap = ops::tokens_to_spatial(x, cfg_.grid(), cfg_.grid());
  }
  return {x, tap};
}

}  // namespace wildsam

#include "wildsam/decoder.hpp"

#include "wildsam/ops.hpp"

namespace wildsam {

using namespace ops;

MaskDecoder::MaskDecoder(const std::string& prefix, int embed_dim,
                         int image_size, ParamStore& store)
    : embed_dim_(embed_dim), image_size_(image_size) {
  const int d = embed_dim;
  // deliberately narrow: mask quality should come from the encoder features
  // and the dense prompt, not from decoder capacity
  const int d2 = d / 16 < 1 ? 1 : d / 16;
  const int d4 = d2;
  up1_w_ = store.create_kaiming(prefix + ".up1.w", {d, d2, 2, 2},
                                static_cast<int64_t>(d) * 4, true);
  up1_b_ = store.create_zeros(prefix + ".up1.b", {d2}, true);
  up2_w_ = store.create_kaiming(prefix + ".up2.w", {d2, d4, 2, 2},
                                static_cast<int64_t>(d2) * 4, true);
  up2_b_ = store.create_zeros(prefix + ".up2.b", {d4}, true);
  out_w_ = store.create_kaiming(prefix + ".out.w", {1, d4, 1, 1}, d4, true);
  out_b_ = store.create_zeros(prefix + ".out.b", {1}, true);
}

Tensor MaskDecoder::decode(const Tensor& embedding,
                           const Tensor& prompt) const {
  if (embedding.ndim() != 4 || embedding.dim(1) != embed_dim_)
    throw DimensionError("decode: embedding must be [B,D,h,w], got " +
                         shape_str(embedding.shape()));
  Tensor fused = embedding;
  if (prompt.defined()) {
    if (prompt.shape() != embedding.shape())
      throw DimensionError("decode: prompt grid " + shape_str(prompt.shape()) +
                           " does not match embedding grid " +
                           shape_str(embedding.shape()));
    fused = add(embedding, prompt);
  }
  Tensor h = gelu(conv_transpose2x2(fused, up1_w_, up1_b_));
  h = gelu(conv_transpose2x2(h, up2_w_, up2_b_));
  Tensor logits = conv2d(h, out_w_, out_b_, 1, 1, 0, 0);
  logits = bilinear_resize(logits, image_size_, image_size_);
  return reshape(logits, {logits.dim(0), image_size_, image_size_});
}

Tensor dice_loss(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape())
    throw DimensionError("dice_loss: shape mismatch");
  const double eps = 1.0;
  Tensor p = sigmoid(logits);
  Tensor inter = sum(mul(p, targets));
  Tensor denom = add(sum(p), sum(targets));
  Tensor ratio = div(add_const(scale(inter, 2.0), eps), add_const(denom, eps));
  return add_const(neg(ratio), 1.0);
}

Tensor total_loss(const Tensor& logits, const Tensor& targets,
                  double lambda) {
  if (lambda < 0.0) throw ConfigError("total_loss: lambda must be >= 0");
  Tensor l = bce_with_logits_mean(logits, targets);
  if (lambda != 0.0) l = add(l, scale(dice_loss(logits, targets), lambda));
  return l;
}

}  // namespace wildsam

#pragma once

#include "wildsam/params.hpp"
#include "wildsam/tensor.hpp"

namespace wildsam {

// Lightweight mask head. The dense prompt is added to the image embedding;
// two stride-2 transposed convolutions with GELU upsample 4x, a 1x1 conv
// produces one channel, and a bilinear resize reaches the input resolution.
class MaskDecoder {
 public:
  MaskDecoder(const std::string& prefix, int embed_dim, int image_size,
              ParamStore& store);

  // embedding, prompt: [B,D,h,w] on the same grid (prompt may be undefined
  // for the promptless baseline). Returns logits [B,S,S].
  Tensor decode(const Tensor& embedding, const Tensor& prompt) const;

 private:
  int embed_dim_, image_size_;
  Tensor up1_w_, up1_b_, up2_w_, up2_b_, out_w_, out_b_;
};

// 1 - (2*sum(p*y)+eps) / (sum(p)+sum(y)+eps), p = sigmoid(logits), eps = 1.
Tensor dice_loss(const Tensor& logits, const Tensor& targets);

// Mean stable-form BCE plus lambda times the soft Dice complement.
Tensor total_loss(const Tensor& logits, const Tensor& targets, double lambda);

}  // namespace wildsam

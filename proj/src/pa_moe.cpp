#include "wildsam/pa_moe.hpp"

#include "wildsam/ops.hpp"

namespace wildsam {

PaMoeAdapter::PaMoeAdapter(const std::string& prefix, int channels, int grid_h,
                           int grid_w, int embed_dim,
                           std::array<bool, 4> expert_mask, ParamStore& store,
                           int bottleneck_ratio)
    : channels_(channels),
      grid_h_(grid_h),
      grid_w_(grid_w),
      embed_dim_(embed_dim),
      mask_(expert_mask) {
  const int c = channels;
  if (c < bottleneck_ratio)
    throw ConfigError("pa_moe: channels below bottleneck ratio");
  bool any = false;
  for (bool m : mask_) any = any || m;
  if (!any) throw ConfigError("pa_moe: expert_mask must enable >=1 expert");

  if (mask_[0]) {
    e1_w_ = store.create_kaiming(prefix + ".e1.w", {c, 1, 3, 3}, 9, true);
    e1_b_ = store.create_zeros(prefix + ".e1.b", {c}, true);
  }
  if (mask_[1]) {
    e2_w_ = store.create_kaiming(prefix + ".e2.w", {c, c, 3, 3},
                                 static_cast<int64_t>(c) * 9, true);
    e2_b_ = store.create_zeros(prefix + ".e2.b", {c}, true);
  }
  if (mask_[2]) {
    e3_w1_ = store.create_kaiming(prefix + ".e3.w1", {c, c, 1, 5},
                                  static_cast<int64_t>(c) * 5, true);
    e3_b1_ = store.create_zeros(prefix + ".e3.b1", {c}, true);
    e3_w2_ = store.create_kaiming(prefix + ".e3.w2", {c, c, 5, 1},
                                  static_cast<int64_t>(c) * 5, true);
    e3_b2_ = store.create_zeros(prefix + ".e3.b2", {c}, true);
  }
  if (mask_[3]) {
    Tensor lap = Tensor::zeros({c, 1, 3, 3});
    for (int ch = 0; ch < c; ++ch) {
      double* k = lap.data().data() + static_cast<int64_t>(ch) * 9;
      k[1] = 1.0;
      k[3] = 1.0;
      k[4] = -4.0;
      k[5] = 1.0;
      k[7] = 1.0;
    }
    e4_lap_ = store.adopt(prefix + ".e4.lap", std::move(lap), false);
    e4_w_ = store.create_kaiming(prefix + ".e4.w", {c, c, 1, 1}, c, true);
    e4_b_ = store.create_zeros(prefix + ".e4.b", {c}, true);
  }

  const int hidden = c / bottleneck_ratio;
  r_w1_ = store.create_kaiming(prefix + ".router.w1", {c, hidden}, c, true);
  r_b1_ = store.create_zeros(prefix + ".router.b1", {hidden}, true);
  // no bias on the second routing projection
  r_w2_ = store.create_kaiming(prefix + ".router.w2", {hidden, 4}, hidden,
                               true);
  head_w_ = store.create_kaiming(prefix + ".head.w",
                                 {2 * embed_dim, c, 1, 1}, c, true);
  head_b_ = store.create_zeros(prefix + ".head.b", {2 * embed_dim}, true);
}

Tensor PaMoeAdapter::route(const Tensor& x) const {
  using namespace ops;
  Tensor g = global_average_pool(x);  // [B,C]
  Tensor h = gelu(add_bias(matmul(g, r_w1_), r_b1_));
  Tensor logits = matmul(h, r_w2_);  // [B,4]
  bool all_active = mask_[0] && mask_[1] && mask_[2] && mask_[3];
  if (!all_active) {
    Tensor bias = Tensor::zeros(logits.shape());
    const int B = logits.dim(0);
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < 4; ++i)
        if (!mask_[static_cast<size_t>(i)])
          bias.at(static_cast<int64_t>(b) * 4 + i) = -1e30;
    logits = add(logits, bias);
  }
  return softmax_lastdim(logits);
}

Tensor PaMoeAdapter::expert(int i, const Tensor& x) const {
  using namespace ops;
  if (i < 0 || i > 3 || !mask_[static_cast<size_t>(i)])
    throw UsageError("pa_moe: expert " + std::to_string(i + 1) +
                     " is disabled");
  switch (i) {
    case 0:
      return conv2d(x, e1_w_, e1_b_, channels_, 1, 1, 1);
    case 1:
      return conv2d(x, e2_w_, e2_b_, 1, 2, 2, 2);
    case 2:
      return conv2d(conv2d(x, e3_w1_, e3_b1_, 1, 1, 0, 2), e3_w2_, e3_b2_, 1,
                    1, 2, 0);
    default:
      return conv2d(conv2d(x, e4_lap_, Tensor(), channels_, 1, 1, 1), e4_w_,
                    e4_b_, 1, 1, 0, 0);
  }
}

Tensor PaMoeAdapter::fuse(const Tensor& x, const Tensor& weights) const {
  using namespace ops;
  if (weights.ndim() != 2 || weights.dim(1) != 4 ||
      weights.dim(0) != x.dim(0))
    throw DimensionError("pa_moe fuse: weights must be [B,4]");
  Tensor y;
  for (int i = 0; i < 4; ++i) {
    if (!mask_[static_cast<size_t>(i)]) continue;
    Tensor wi = reshape(narrow(weights, 1, i, 1), {x.dim(0)});
    Tensor term = mul_batch_scalar(expert(i, x), wi);
    y = y.defined() ? add(y, term) : term;
  }
  return y;
}

QVPerturbation PaMoeAdapter::perturb_head(const Tensor& y) const {
  using namespace ops;
  if (y.ndim() != 4 || y.dim(2) != grid_h_ || y.dim(3) != grid_w_)
    throw DimensionError("pa_moe perturb_head: grid mismatch, got " +
                         shape_str(y.shape()));
  Tensor proj = conv2d(y, head_w_, head_b_, 1, 1, 0, 0);  // [B,2D,h,w]
  Tensor dq = spatial_to_tokens(narrow(proj, 1, 0, embed_dim_));
  Tensor dv = spatial_to_tokens(narrow(proj, 1, embed_dim_, embed_dim_));
  return {dq, dv};
}

QVPerturbation PaMoeAdapter::forward(const Tensor& tokens) const {
  Tensor x = ops::tokens_to_spatial(tokens, grid_h_, grid_w_);
  return perturb_head(fuse(x, route(x)));
}

}  // namespace wildsam

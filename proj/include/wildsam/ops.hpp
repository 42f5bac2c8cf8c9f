#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "wildsam/tensor.hpp"

// Differentiable tensor operations. Every op computes its forward result
// eagerly; when a GradientTape is live and an input participates in
// differentiation, a backward closure is recorded on the tape.

namespace wildsam::ops {

// ---- elementwise ----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor gelu(const Tensor& x);     // exact erf form: x * Phi(x)
Tensor sigmoid(const Tensor& x);  // sign-branched for stability

// out = a * s where s is a 1-element tensor (learnable scalar).
Tensor scale_by(const Tensor& a, const Tensor& s);

// x[..., C] + b[C], broadcast over leading dims.
Tensor add_bias(const Tensor& x, const Tensor& b);

// F[B,N,C] * s[B,C], s broadcast over the token axis.
Tensor mul_channels(const Tensor& f, const Tensor& s);

// x[B,...] * s[B], one scalar per batch element.
Tensor mul_batch_scalar(const Tensor& x, const Tensor& s);

// ---- reductions -----------------------------------------------------------
Tensor sum(const Tensor& x);   // -> [1]
Tensor mean(const Tensor& x);  // -> [1]
Tensor global_average_pool(const Tensor& x);  // [B,C,H,W] -> [B,C]
Tensor mean_tokens(const Tensor& x);          // [B,N,C] -> [B,C]

// ---- linear algebra -------------------------------------------------------
// a: [M,K] or [B,M,K]; b: [K,N] or [B,K,N]. A 3D a with 2D b applies the
// same right factor to every batch element.
Tensor matmul(const Tensor& a, const Tensor& b);
// Batched 3D matmul with optional transposition of the last two dims.
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b);
Tensor softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-6);
// Softmax(q k^T / sqrt(d_k)) v over 3D batches [B,N,d],[B,M,d],[B,M,d].
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// ---- shape / data movement ------------------------------------------------
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor split_heads(const Tensor& x, int heads);   // [B,N,D] -> [B*h,N,D/h]
Tensor merge_heads(const Tensor& x, int heads);   // [B*h,N,dh] -> [B,N,D]
Tensor tokens_to_spatial(const Tensor& x, int h, int w);  // [B,N,D]->[B,D,h,w]
Tensor spatial_to_tokens(const Tensor& x);                // [B,D,h,w]->[B,N,D]
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor narrow(const Tensor& x, int axis, int start, int len);
// Non-overlapping ps x ps patches: [B,C,S,S] -> [B,(S/ps)^2, C*ps*ps].
Tensor extract_patches(const Tensor& x, int ps);

// ---- convolutions ---------------------------------------------------------
// Cross-correlation, stride 1. w: [Cout, Cin/groups, kh, kw].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int groups,
              int dilation, int pad_h, int pad_w);
// Transposed conv, kernel 2, stride 2 (exact 2x upsampling).
// w: [Cin, Cout, 2, 2].
Tensor conv_transpose2x2(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- wavelets -------------------------------------------------------------
struct Subbands {
  Tensor ll, lh, hl, hh;  // each [B,C,H/2,W/2]
};
// Orthonormal single-level Haar on non-overlapping 2x2 blocks [[a,b],[c,d]]:
// LL=(a+b+c+d)/2, LH=(a+b-c-d)/2, HL=(a-b+c-d)/2, HH=(a-b-c+d)/2.
Subbands dwt_haar(const Tensor& x);
Tensor idwt_haar(const Subbands& s);

// ---- resampling -----------------------------------------------------------
// Bilinear, half-pixel centers, clamped borders. Differentiable.
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

// ---- losses ---------------------------------------------------------------
// Mean stable logit-form BCE; `targets` is treated as constant data.
Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets);

// ---- verification oracle --------------------------------------------------
// Central finite differences of a scalar function, elementwise over x.
// Runs without a tape; f must be deterministic.
Tensor fd_gradient(const std::function<double(const Tensor&)>& f,
                   const Tensor& x, double eps);

}  // namespace wildsam::ops

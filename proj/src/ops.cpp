#include "wildsam/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "wildsam/kernels.hpp"

namespace wildsam::ops {

namespace {

using kernels::active;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

bool tracked(const Tensor& t) { return t.impl()->needs_grad; }

bool taping(std::initializer_list<const Tensor*> inputs) {
  if (!GradientTape::current()) return false;
  for (const Tensor* t : inputs)
    if (t->impl()->needs_grad) return true;
  return false;
}

Tensor make_out(Shape s, bool needs) {
  Tensor o = Tensor::zeros(std::move(s));
  o.impl()->needs_grad = needs;
  return o;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const bool rec = taping({&a, &b});
  Tensor out = make_out(a.shape(), rec);
  active().vadd(static_cast<int>(a.size()), a.data().data(), b.data().data(),
                out.data().data());
  if (rec) {
    GradientTape::current()->record([ai = a.impl(), bi = b.impl(),
                                     oi = out.impl()] {
      const int n = static_cast<int>(oi->data.size());
      if (ai->needs_grad) active().axpy(n, 1.0, oi->grad_ptr(), ai->grad_ptr());
      if (bi->needs_grad) active().axpy(n, 1.0, oi->grad_ptr(), bi->grad_ptr());
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const bool rec = taping({&a, &b});
  Tensor out = make_out(a.shape(), rec);
  for (int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) - b.at(i);
  if (rec) {
    GradientTape::current()->record([ai = a.impl(), bi = b.impl(),
                                     oi = out.impl()] {
      const int n = static_cast<int>(oi->data.size());
      if (ai->needs_grad) active().axpy(n, 1.0, oi->grad_ptr(), ai->grad_ptr());
      if (bi->needs_grad)
        active().axpy(n, -1.0, oi->grad_ptr(), bi->grad_ptr());
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const bool rec = taping({&a, &b});
  Tensor out = make_out(a.shape(), rec);
  active().vmul(static_cast<int>(a.size()), a.data().data(), b.data().data(),
                out.data().data());
  if (rec) {
    GradientTape::current()->record([ai = a.impl(), bi = b.impl(),
                                     oi = out.impl()] {
      const size_t n = oi->data.size();
      const double* g = oi->grad_ptr();
      if (ai->needs_grad) {
        double* da = ai->grad_ptr();
        for (size_t i = 0; i < n; ++i) da[i] += g[i] * bi->data[i];
      }
      if (bi->needs_grad) {
        double* db = bi->grad_ptr();
        for (size_t i = 0; i < n; ++i) db[i] += g[i] * ai->data[i];
      }
    });
  }
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  const bool rec = taping({&a, &b});
  Tensor out = make_out(a.shape(), rec);
  for (int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) / b.at(i);
  if (rec) {
    GradientTape::current()->record([ai = a.impl(), bi = b.impl(),
                                     oi = out.impl()] {
      const size_t n = oi->data.size();
      const double* g = oi->grad_ptr();
      if (ai->needs_grad) {
        double* da = ai->grad_ptr();
        for (size_t i = 0; i < n; ++i) da[i] += g[i] / bi->data[i];
      }
      if (bi->needs_grad) {
        double* db = bi->grad_ptr();
        for (size_t i = 0; i < n; ++i)
          db[i] -= g[i] * oi->data[i] / bi->data[i];
      }
    });
  }
  return out;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
  const bool rec = taping({&a});
  Tensor out = make_out(a.shape(), rec);
  active().vscale(static_cast<int>(a.size()), c, a.data().data(),
                  out.data().data());
  if (rec) {
    GradientTape::current()->record([ai = a.impl(), oi = out.impl(), c] {
      if (ai->needs_grad)
        active().axpy(static_cast<int>(oi->data.size()), c, oi->grad_ptr(),
                      ai->grad_ptr());
    });
  }
  return out;
}

Tensor add_const(const Tensor& a, double c) {
  const bool rec = taping({&a});
  Tensor out = make_out(a.shape(), rec);
  for (int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) + c;
  if (rec) {
    GradientTape::current()->record([ai = a.impl(), oi = out.impl()] {
      if (ai->needs_grad)
        active().axpy(static_cast<int>(oi->data.size()), 1.0, oi->grad_ptr(),
                      ai->grad_ptr());
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  const bool rec = taping({&x});
  Tensor out = make_out(x.shape(), rec);
  for (int64_t i = 0; i < x.size(); ++i)
    out.at(i) = x.at(i) * norm_cdf(x.at(i));
  if (rec) {
    GradientTape::current()->record([xi = x.impl(), oi = out.impl()] {
      if (!xi->needs_grad) return;
      const size_t n = oi->data.size();
      const double* g = oi->grad_ptr();
      double* dx = xi->grad_ptr();
      for (size_t i = 0; i < n; ++i) {
        const double v = xi->data[i];
        dx[i] += g[i] * (norm_cdf(v) + v * norm_pdf(v));
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  const bool rec = taping({&x});
  Tensor out = make_out(x.shape(), rec);
  for (int64_t i = 0; i < x.size(); ++i) out.at(i) = stable_sigmoid(x.at(i));
  if (rec) {
    GradientTape::current()->record([xi = x.impl(), oi = out.impl()] {
      if (!xi->needs_grad) return;
      const size_t n = oi->data.size();
      const double* g = oi->grad_ptr();
      double* dx = xi->grad_ptr();
      for (size_t i = 0; i < n; ++i) {
        const double y = oi->data[i];
        dx[i] += g[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("scale_by: scale must be 1-element");
  const bool rec = taping({&a, &s});
  Tensor out = make_out(a.shape(), rec);
  active().vscale(static_cast<int>(a.size()), s.at(0), a.data().data(),
                  out.data().data());
  if (rec) {
    GradientTape::current()->record([ai = a.impl(), si = s.impl(),
                                     oi = out.impl()] {
      const int n = static_cast<int>(oi->data.size());
      if (ai->needs_grad)
        active().axpy(n, si->data[0], oi->grad_ptr(), ai->grad_ptr());
      if (si->needs_grad)
        si->grad_ptr()[0] +=
            active().dot(n, oi->grad_ptr(), ai->data.data());
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  require(b.ndim() == 1, "add_bias: bias must be 1-D");
  const int c = b.dim(0);
  require(x.dim(-1) == c, "add_bias: trailing dim mismatch");
  const bool rec = taping({&x, &b});
  Tensor out = make_out(x.shape(), rec);
  const int64_t rows = x.size() / c;
  for (int64_t r = 0; r < rows; ++r) {
    const double* xp = x.data().data() + r * c;
    double* op = out.data().data() + r * c;
    active().vadd(c, xp, b.data().data(), op);
  }
  if (rec) {
    GradientTape::current()->record([xi = x.impl(), bi = b.impl(),
                                     oi = out.impl(), rows, c] {
      const double* g = oi->grad_ptr();
      if (xi->needs_grad)
        active().axpy(static_cast<int>(oi->data.size()), 1.0, g,
                      xi->grad_ptr());
      if (bi->needs_grad) {
        double* db = bi->grad_ptr();
        for (int64_t r = 0; r < rows; ++r)
          active().axpy(c, 1.0, g + r * c, db);
      }
    });
  }
  return out;
}

Tensor mul_channels(const Tensor& f, const Tensor& s) {
  require(f.ndim() == 3 && s.ndim() == 2, "mul_channels: expected 3D, 2D");
  const int B = f.dim(0), N = f.dim(1), C = f.dim(2);
  require(s.dim(0) == B && s.dim(1) == C, "mul_channels: scale shape");
  const bool rec = taping({&f, &s});
  Tensor out = make_out(f.shape(), rec);
  for (int b = 0; b < B; ++b) {
    const double* sp = s.data().data() + static_cast<int64_t>(b) * C;
    for (int n = 0; n < N; ++n) {
      const int64_t off = (static_cast<int64_t>(b) * N + n) * C;
      active().vmul(C, f.data().data() + off, sp, out.data().data() + off);
    }
  }
  if (rec) {
    GradientTape::current()->record([fi = f.impl(), si = s.impl(),
                                     oi = out.impl(), B, N, C] {
      const double* g = oi->grad_ptr();
      for (int b = 0; b < B; ++b) {
        const int64_t soff = static_cast<int64_t>(b) * C;
        for (int n = 0; n < N; ++n) {
          const int64_t off = (static_cast<int64_t>(b) * N + n) * C;
          if (fi->needs_grad) {
            double* df = fi->grad_ptr() + off;
            for (int c = 0; c < C; ++c)
              df[c] += g[off + c] * si->data[soff + c];
          }
          if (si->needs_grad) {
            double* ds = si->grad_ptr() + soff;
            for (int c = 0; c < C; ++c)
              ds[c] += g[off + c] * fi->data[off + c];
          }
        }
      }
    });
  }
  return out;
}

Tensor mul_batch_scalar(const Tensor& x, const Tensor& s) {
  require(x.ndim() >= 1, "mul_batch_scalar: bad input");
  const int B = x.dim(0);
  require(s.size() == B, "mul_batch_scalar: need one scalar per batch element");
  const int64_t stride = x.size() / B;
  const bool rec = taping({&x, &s});
  Tensor out = make_out(x.shape(), rec);
  for (int b = 0; b < B; ++b)
    active().vscale(static_cast<int>(stride), s.at(b),
                    x.data().data() + b * stride,
                    out.data().data() + b * stride);
  if (rec) {
    GradientTape::current()->record([xi = x.impl(), si = s.impl(),
                                     oi = out.impl(), B, stride] {
      const double* g = oi->grad_ptr();
      for (int b = 0; b < B; ++b) {
        if (xi->needs_grad)
          active().axpy(static_cast<int>(stride), si->data[static_cast<size_t>(b)],
                        g + b * stride, xi->grad_ptr() + b * stride);
        if (si->needs_grad)
          si->grad_ptr()[b] += active().dot(static_cast<int>(stride),
                                            g + b * stride,
                                            xi->data.data() + b * stride);
      }
    });
  }
  return out;
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x) {
  const bool rec = taping({&x});
  Tensor out = make_out({1}, rec);
  out.at(0) = active().vsum(static_cast<int>(x.size()), x.data().data());
  if (rec) {
    GradientTape::current()->record([xi = x.impl(), oi = out.impl()] {
      if (!xi->needs_grad) return;
      const double g = oi->grad_ptr()[0];
      double* dx = xi->grad_ptr();
      for (size_t i = 0; i < xi->data.size(); ++i) dx[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor global_average_pool(const Tensor& x) {
  require(x.ndim() == 4, "global_average_pool: expected [B,C,H,W]");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int hw = H * W;
  const bool rec = taping({&x});
  Tensor out = make_out({B, C}, rec);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const int64_t off = (static_cast<int64_t>(b) * C + c) * hw;
      out.at(static_cast<int64_t>(b) * C + c) =
          active().vsum(hw, x.data().data() + off) / hw;
    }
  if (rec) {
    GradientTape::current()->record([xi = x.impl(), oi = out.impl(), B, C,
                                     hw] {
      if (!xi->needs_grad) return;
      const double* g = oi->grad_ptr();
      double* dx = xi->grad_ptr();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          const double gv = g[static_cast<int64_t>(b) * C + c] / hw;
          double* p = dx + (static_cast<int64_t>(b) * C + c) * hw;
          for (int i = 0; i < hw; ++i) p[i] += gv;
        }
    });
  }
  return out;
}

Tensor mean_tokens(const Tensor& x) {
  require(x.ndim() == 3, "mean_tokens: expected [B,N,C]");
  const int B = x.dim(0), N = x.dim(1), C = x.dim(2);
  const bool rec = taping({&x});
  Tensor out = make_out({B, C}, rec);
  for (int b = 0; b < B; ++b) {
    double* op = out.data().data() + static_cast<int64_t>(b) * C;
    for (int n = 0; n < N; ++n)
      active().axpy(C, 1.0 / N,
                    x.data().data() + (static_cast<int64_t>(b) * N + n) * C,
                    op);
  }
  if (rec) {
    GradientTape::current()->record([xi = x.impl(), oi = out.impl(), B, N,
                                     C] {
      if (!xi->needs_grad) return;
      const double* g = oi->grad_ptr();
      double* dx = xi->grad_ptr();
      for (int b = 0; b < B; ++b)
        for (int n = 0; n < N; ++n)
          active().axpy(C, 1.0 / N, g + static_cast<int64_t>(b) * C,
                        dx + (static_cast<int64_t>(b) * N + n) * C);
    });
  }
  return out;
}

// ---- linear algebra -------------------------------------------------------

namespace {

struct MatmulDims {
  int batch, M, N, K;
  bool batched_a, batched_b;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
  MatmulDims d{};
  if (a.ndim() == 2 && b.ndim() == 2) {
    d = {1, a.dim(0), b.dim(1), a.dim(1), false, false};
  } else if (a.ndim() == 3 && b.ndim() == 2) {
    d = {a.dim(0), a.dim(1), b.dim(1), a.dim(2), true, false};
  } else if (a.ndim() == 3 && b.ndim() == 3) {
    require(a.dim(0) == b.dim(0), "matmul: batch mismatch");
    d = {a.dim(0), a.dim(1), b.dim(2), a.dim(2), true, true};
  } else {
    throw DimensionError("matmul: unsupported ranks " +
                         std::to_string(a.ndim()) + "," +
                         std::to_string(b.ndim()));
  }
  const int bk = b.dim(b.ndim() - 2);
  require(bk == d.K, "matmul: inner dimension mismatch " +
                         shape_str(a.shape()) + " @ " + shape_str(b.shape()));
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatmulDims d = matmul_dims(a, b);
  const bool rec = taping({&a, &b});
  Shape os;
  if (d.batched_a)
    os = {d.batch, d.M, d.N};
  else
    os = {d.M, d.N};
  Tensor out = make_out(os, rec);
  const int64_t as = static_cast<int64_t>(d.M) * d.K;
  const int64_t bs = static_cast<int64_t>(d.K) * d.N;
  const int64_t cs = static_cast<int64_t>(d.M) * d.N;
  for (int i = 0; i < d.batch; ++i) {
    const double* ap = a.data().data() + (d.batched_a ? i * as : 0);
    const double* bp = b.data().data() + (d.batched_b ? i * bs : 0);
    active().gemm_nn(d.M, d.N, d.K, ap, d.K, bp, d.N,
                     out.data().data() + i * cs, d.N, false);
  }
  if (rec) {
    GradientTape::current()->record([ai = a.impl(), bi = b.impl(),
                                     oi = out.impl(), d, as, bs, cs] {
      const double* g = oi->grad_ptr();
      for (int i = 0; i < d.batch; ++i) {
        const double* gp = g + i * cs;
        const double* ap = ai->data.data() + (d.batched_a ? i * as : 0);
        const double* bp = bi->data.data() + (d.batched_b ? i * bs : 0);
        if (ai->needs_grad)
          active().gemm_nt(d.M, d.K, d.N, gp, d.N, bp, d.N,
                           ai->grad_ptr() + (d.batched_a ? i * as : 0), d.K,
                           true);
        if (bi->needs_grad)
          active().gemm_tn(d.K, d.N, d.M, ap, d.K, gp, d.N,
                           bi->grad_ptr() + (d.batched_b ? i * bs : 0), d.N,
                           true);
      }
    });
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  require(a.ndim() == 3 && b.ndim() == 3, "bmm: expected 3D tensors");
  require(a.dim(0) == b.dim(0), "bmm: batch mismatch");
  if (trans_a && trans_b) throw DimensionError("bmm: tt unsupported");
  const int batch = a.dim(0);
  const int M = trans_a ? a.dim(2) : a.dim(1);
  const int K = trans_a ? a.dim(1) : a.dim(2);
  const int N = trans_b ? b.dim(1) : b.dim(2);
  const int bk = trans_b ? b.dim(2) : b.dim(1);
  require(bk == K, "bmm: inner dimension mismatch");
  const bool rec = taping({&a, &b});
  Tensor out = make_out({batch, M, N}, rec);
  const int64_t as = static_cast<int64_t>(a.dim(1)) * a.dim(2);
  const int64_t bs = static_cast<int64_t>(b.dim(1)) * b.dim(2);
  const int64_t cs = static_cast<int64_t>(M) * N;
  for (int i = 0; i < batch; ++i) {
    const double* ap = a.data().data() + i * as;
    const double* bp = b.data().data() + i * bs;
    double* cp = out.data().data() + i * cs;
    if (!trans_a && !trans_b)
      active().gemm_nn(M, N, K, ap, K, bp, N, cp, N, false);
    else if (!trans_a && trans_b)
      active().gemm_nt(M, N, K, ap, K, bp, K, cp, N, false);
    else
      active().gemm_tn(M, N, K, ap, M, bp, N, cp, N, false);
  }
  if (rec) {
    GradientTape::current()->record([ai = a.impl(), bi = b.impl(),
                                     oi = out.impl(), batch, M, N, K, as, bs,
                                     cs, trans_a, trans_b] {
      const double* g = oi->grad_ptr();
      for (int i = 0; i < batch; ++i) {
        const double* gp = g + i * cs;
        const double* ap = ai->data.data() + i * as;
        const double* bp = bi->data.data() + i * bs;
        double* dap = ai->needs_grad ? ai->grad_ptr() + i * as : nullptr;
        double* dbp = bi->needs_grad ? bi->grad_ptr() + i * bs : nullptr;
        if (!trans_a && !trans_b) {
          if (dap) active().gemm_nt(M, K, N, gp, N, bp, N, dap, K, true);
          if (dbp) active().gemm_tn(K, N, M, ap, K, gp, N, dbp, N, true);
        } else if (!trans_a && trans_b) {
          // C = A B^T, A:[M,K], B:[N,K]
          if (dap) active().gemm_nn(M, K, N, gp, N, bp, K, dap, K, true);
          if (dbp) active().gemm_tn(N, K, M, gp, N, ap, K, dbp, K, true);
        } else {
          // C = A^T B, A:[K,M], B:[K,N]
          if (dap) active().gemm_nt(K, M, N, bp, N, gp, N, dap, M, true);
          if (dbp) active().gemm_nn(K, N, M, ap, M, gp, N, dbp, N, true);
        }
      }
    });
  }
  return out;
}

Tensor softmax_lastdim(const Tensor& x) {
  require(x.ndim() >= 1, "softmax: scalar input");
  const int L = x.dim(-1);
  const int64_t rows = x.size() / L;
  const bool rec = taping({&x});
  Tensor out = make_out(x.shape(), rec);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xp = x.data().data() + r * L;
    double* op = out.data().data() + r * L;
    double mx = xp[0];
    for (int i = 1; i < L; ++i) mx = std::max(mx, xp[i]);
    double z = 0.0;
    for (int i = 0; i < L; ++i) {
      op[i] = std::exp(xp[i] - mx);
      z += op[i];
    }
    const double inv = 1.0 / z;
    for (int i = 0; i < L; ++i) op[i] *= inv;
  }
  if (rec) {
    GradientTape::current()->record([xi = x.impl(), oi = out.impl(), rows,
                                     L] {
      if (!xi->needs_grad) return;
      const double* g = oi->grad_ptr();
      double* dx = xi->grad_ptr();
      for (int64_t r = 0; r < rows; ++r) {
        const double* y = oi->data.data() + r * L;
        const double* gy = g + r * L;
        const double s = active().dot(L, gy, y);
        double* d = dx + r * L;
        for (int i = 0; i < L; ++i) d[i] += y[i] * (gy[i] - s);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const int C = x.dim(-1);
  require(gain.ndim() == 1 && gain.dim(0) == C, "layer_norm: gain shape");
  require(bias.ndim() == 1 && bias.dim(0) == C, "layer_norm: bias shape");
  const int64_t rows = x.size() / C;
  const bool rec = taping({&x, &gain, &bias});
  Tensor out = make_out(x.shape(), rec);
  std::vector<double> inv_std(static_cast<size_t>(rows));
  std::vector<double> mean_v(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* xp = x.data().data() + r * C;
    double mu = active().vsum(C, xp) / C;
    double var = 0.0;
    for (int i = 0; i < C; ++i) {
      const double d = xp[i] - mu;
      var += d * d;
    }
    var /= C;
    const double inv = 1.0 / std::sqrt(var + eps);
    mean_v[static_cast<size_t>(r)] = mu;
    inv_std[static_cast<size_t>(r)] = inv;
    double* op = out.data().data() + r * C;
    for (int i = 0; i < C; ++i)
      op[i] = (xp[i] - mu) * inv * gain.at(i) + bias.at(i);
  }
  if (rec) {
    GradientTape::current()->record([xi = x.impl(), gi = gain.impl(),
                                     bi = bias.impl(), oi = out.impl(), rows,
                                     C, mean_v = std::move(mean_v),
                                     inv_std = std::move(inv_std)] {
      const double* g = oi->grad_ptr();
      for (int64_t r = 0; r < rows; ++r) {
        const double* xp = xi->data.data() + r * C;
        const double* gy = g + r * C;
        const double mu = mean_v[static_cast<size_t>(r)];
        const double inv = inv_std[static_cast<size_t>(r)];
        if (gi->needs_grad || bi->needs_grad) {
          double* dg = gi->needs_grad ? gi->grad_ptr() : nullptr;
          double* db = bi->needs_grad ? bi->grad_ptr() : nullptr;
          for (int i = 0; i < C; ++i) {
            if (dg) dg[i] += gy[i] * (xp[i] - mu) * inv;
            if (db) db[i] += gy[i];
          }
        }
        if (xi->needs_grad) {
          double sum_dh = 0.0, sum_dh_xhat = 0.0;
          for (int i = 0; i < C; ++i) {
            const double dh = gy[i] * gi->data[static_cast<size_t>(i)];
            const double xh = (xp[i] - mu) * inv;
            sum_dh += dh;
            sum_dh_xhat += dh * xh;
          }
          double* dx = xi->grad_ptr() + r * C;
          for (int i = 0; i < C; ++i) {
            const double dh = gy[i] * gi->data[static_cast<size_t>(i)];
            const double xh = (xp[i] - mu) * inv;
            dx[i] += inv * (dh - sum_dh / C - xh * sum_dh_xhat / C);
          }
        }
      }
    });
  }
  return out;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k,
                            const Tensor& v) {
  require(q.ndim() == 3 && k.ndim() == 3 && v.ndim() == 3,
          "attention: expected 3D tensors");
  require(q.dim(2) == k.dim(2), "attention: q/k feature dim mismatch");
  require(k.dim(1) == v.dim(1), "attention: k/v length mismatch");
  const double scl = 1.0 / std::sqrt(static_cast<double>(k.dim(2)));
  Tensor logits = scale(bmm(q, k, false, true), scl);
  Tensor att = softmax_lastdim(logits);
  return bmm(att, v, false, false);
}

// ---- shape / data movement ------------------------------------------------

Tensor reshape(const Tensor& x, Shape new_shape) {
  require(numel(new_shape) == x.size(),
          "reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
              shape_str(new_shape));
  const bool rec = taping({&x});
  Tensor out = make_out(std::move(new_shape), rec);
  out.data() = x.data();
  if (rec) {
    GradientTape::current()->record([xi = x.impl(), oi = out.impl()] {
      if (xi->needs_grad)
        active().axpy(static_cast<int>(oi->data.size()), 1.0, oi->grad_ptr(),
                      xi->grad_ptr());
    });
  }
  return out;
}

namespace {

// Permutation ops share one gather/scatter skeleton: out[i] = x[perm(i)].
Tensor gather_op(const Tensor& x, Shape out_shape,
                 std::function<int64_t(int64_t)> src_index) {
  const bool rec = taping({&x});
  Tensor out = make_out(std::move(out_shape), rec);
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out.at(i) = x.at(src_index(i));
  if (rec) {
    GradientTape::current()->record(
        [xi = x.impl(), oi = out.impl(), src_index, n] {
          if (!xi->needs_grad) return;
          const double* g = oi->grad_ptr();
          double* dx = xi->grad_ptr();
          for (int64_t i = 0; i < n; ++i) dx[src_index(i)] += g[i];
        });
  }
  return out;
}

}  // namespace

Tensor split_heads(const Tensor& x, int heads) {
  require(x.ndim() == 3, "split_heads: expected [B,N,D]");
  const int B = x.dim(0), N = x.dim(1), D = x.dim(2);
  require(D % heads == 0, "split_heads: D not divisible by heads");
  const int dh = D / heads;
  return gather_op(x, {B * heads, N, dh}, [=](int64_t i) {
    const int c = static_cast<int>(i % dh);
    const int n = static_cast<int>((i / dh) % N);
    const int bh = static_cast<int>(i / (static_cast<int64_t>(dh) * N));
    const int b = bh / heads, h = bh % heads;
    return (static_cast<int64_t>(b) * N + n) * D + h * dh + c;
  });
}

Tensor merge_heads(const Tensor& x, int heads) {
  require(x.ndim() == 3, "merge_heads: expected [B*h,N,dh]");
  const int BH = x.dim(0), N = x.dim(1), dh = x.dim(2);
  require(BH % heads == 0, "merge_heads: batch not divisible by heads");
  const int B = BH / heads, D = dh * heads;
  return gather_op(x, {B, N, D}, [=](int64_t i) {
    const int d = static_cast<int>(i % D);
    const int n = static_cast<int>((i / D) % N);
    const int b = static_cast<int>(i / (static_cast<int64_t>(D) * N));
    const int h = d / dh, c = d % dh;
    return (static_cast<int64_t>(b * heads + h) * N + n) * dh + c;
  });
}

Tensor tokens_to_spatial(const Tensor& x, int h, int w) {
  require(x.ndim() == 3, "tokens_to_spatial: expected [B,N,D]");
  const int B = x.dim(0), N = x.dim(1), D = x.dim(2);
  require(h * w == N, "tokens_to_spatial: grid size mismatch");
  return gather_op(x, {B, D, h, w}, [=](int64_t i) {
    const int p = static_cast<int>(i % (h * w));
    const int d = static_cast<int>((i / (h * w)) % D);
    const int b = static_cast<int>(i / (static_cast<int64_t>(h) * w * D));
    return (static_cast<int64_t>(b) * N + p) * D + d;
  });
}

Tensor spatial_to_tokens(const Tensor& x) {
  require(x.ndim() == 4, "spatial_to_tokens: expected [B,D,h,w]");
  const int B = x.dim(0), D = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int N = h * w;
  return gather_op(x, {B, N, D}, [=](int64_t i) {
    const int d = static_cast<int>(i % D);
    const int p = static_cast<int>((i / D) % N);
    const int b = static_cast<int>(i / (static_cast<int64_t>(D) * N));
    return (static_cast<int64_t>(b) * D + d) * N + p;
  });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  require(!xs.empty(), "concat: empty input list");
  const int nd = xs[0].ndim();
  if (axis < 0) axis += nd;
  require(axis >= 0 && axis < nd, "concat: bad axis");
  Shape os = xs[0].shape();
  int total = 0;
  for (const Tensor& t : xs) {
    require(t.ndim() == nd, "concat: rank mismatch");
    for (int i = 0; i < nd; ++i)
      if (i != axis)
        require(t.dim(i) == os[static_cast<size_t>(i)],
                "concat: dim mismatch off-axis");
    total += t.dim(axis);
  }
  os[static_cast<size_t>(axis)] = total;
  bool rec = false;
  if (GradientTape::current())
    for (const Tensor& t : xs)
      if (tracked(t)) rec = true;
  Tensor out = make_out(os, rec);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= os[static_cast<size_t>(i)];
  for (int i = axis + 1; i < nd; ++i) inner *= os[static_cast<size_t>(i)];
  int64_t off_axis = 0;
  for (const Tensor& t : xs) {
    const int64_t seg = t.dim(axis) * inner;
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data().data() + (o * total * inner + off_axis * inner),
                  t.data().data() + o * seg, sizeof(double) * seg);
    off_axis += t.dim(axis);
  }
  if (rec) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<int> axdims;
    for (const Tensor& t : xs) {
      impls.push_back(t.impl());
      axdims.push_back(t.dim(axis));
    }
    GradientTape::current()->record([oi = out.impl(), impls, axdims, outer,
                                     inner, total] {
      const double* g = oi->grad_ptr();
      int64_t off_axis = 0;
      for (size_t idx = 0; idx < impls.size(); ++idx) {
        const int64_t seg = axdims[idx] * inner;
        if (impls[idx]->needs_grad) {
          double* d = impls[idx]->grad_ptr();
          for (int64_t o = 0; o < outer; ++o)
            active().axpy(static_cast<int>(seg), 1.0,
                          g + (o * total * inner + off_axis * inner),
                          d + o * seg);
        }
        off_axis += axdims[idx];
      }
    });
  }
  return out;
}

Tensor narrow(const Tensor& x, int axis, int start, int len) {
  const int nd = x.ndim();
  if (axis < 0) axis += nd;
  require(axis >= 0 && axis < nd, "narrow: bad axis");
  require(start >= 0 && len >= 1 && start + len <= x.dim(axis),
          "narrow: range out of bounds");
  Shape os = x.shape();
  os[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < nd; ++i) inner *= x.dim(i);
  const int full = x.dim(axis);
  return gather_op(x, os, [=](int64_t i) {
    const int64_t in = i % inner;
    const int64_t a = (i / inner) % len;
    const int64_t o = i / (inner * len);
    return (o * full + start + a) * inner + in;
  });
}

Tensor extract_patches(const Tensor& x, int ps) {
  require(x.ndim() == 4, "extract_patches: expected [B,C,S,S]");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % ps == 0 && W % ps == 0,
          "extract_patches: size not divisible by patch size");
  const int gh = H / ps, gw = W / ps;
  const int feat = C * ps * ps;
  return gather_op(x, {B, gh * gw, feat}, [=](int64_t i) {
    const int f = static_cast<int>(i % feat);
    const int n = static_cast<int>((i / feat) % (gh * gw));
    const int b = static_cast<int>(i / (static_cast<int64_t>(feat) * gh * gw));
    const int c = f / (ps * ps);
    const int py = (f / ps) % ps, px = f % ps;
    const int gy = n / gw, gx = n % gw;
    return ((static_cast<int64_t>(b) * C + c) * H + gy * ps + py) * W +
           gx * ps + px;
  });
}

// ---- convolutions ---------------------------------------------------------

namespace {

struct ConvDims {
  int B, C, H, W, Cout, Cin_g, kh, kw, groups, dil, ph, pw, Ho, Wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int groups, int dilation,
                   int pad_h, int pad_w) {
  require(x.ndim() == 4, "conv2d: input must be [B,C,H,W]");
  require(w.ndim() == 4, "conv2d: kernel must be [Cout,Cin/g,kh,kw]");
  require(groups >= 1 && dilation >= 1, "conv2d: groups/dilation must be >=1");
  ConvDims d{};
  d.B = x.dim(0);
  d.C = x.dim(1);
  d.H = x.dim(2);
  d.W = x.dim(3);
  d.Cout = w.dim(0);
  d.Cin_g = w.dim(1);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.groups = groups;
  d.dil = dilation;
  d.ph = pad_h;
  d.pw = pad_w;
  require(d.C % groups == 0, "conv2d: channels not divisible by groups");
  require(d.Cout % groups == 0, "conv2d: Cout not divisible by groups");
  require(d.C / groups == d.Cin_g,
          "conv2d: kernel channel count mismatch (got " +
              std::to_string(d.Cin_g) + ", need " +
              std::to_string(d.C / groups) + ")");
  d.Ho = d.H + 2 * pad_h - dilation * (d.kh - 1);
  d.Wo = d.W + 2 * pad_w - dilation * (d.kw - 1);
  require(d.Ho >= 1 && d.Wo >= 1, "conv2d: output would be empty");
  return d;
}

// col: [Cin_g*kh*kw, Ho*Wo] for one (image, group).
void im2col(const double* xg, const ConvDims& d, double* col) {
  const int hw = d.Ho * d.Wo;
  for (int ci = 0; ci < d.Cin_g; ++ci) {
    const double* xc = xg + static_cast<int64_t>(ci) * d.H * d.W;
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx) {
        double* row = col + (static_cast<int64_t>(ci) * d.kh * d.kw +
                             ky * d.kw + kx) *
                                hw;
        for (int oy = 0; oy < d.Ho; ++oy) {
          const int iy = oy - d.ph + ky * d.dil;
          double* rr = row + static_cast<int64_t>(oy) * d.Wo;
          if (iy < 0 || iy >= d.H) {
            std::memset(rr, 0, sizeof(double) * d.Wo);
            continue;
          }
          const double* xr = xc + static_cast<int64_t>(iy) * d.W;
          for (int ox = 0; ox < d.Wo; ++ox) {
            const int ix = ox - d.pw + kx * d.dil;
            rr[ox] = (ix >= 0 && ix < d.W) ? xr[ix] : 0.0;
          }
        }
      }
  }
}

void col2im_add(const double* col, const ConvDims& d, double* xg) {
  const int hw = d.Ho * d.Wo;
  for (int ci = 0; ci < d.Cin_g; ++ci) {
    double* xc = xg + static_cast<int64_t>(ci) * d.H * d.W;
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx) {
        const double* row = col + (static_cast<int64_t>(ci) * d.kh * d.kw +
                                   ky * d.kw + kx) *
                                      hw;
        for (int oy = 0; oy < d.Ho; ++oy) {
          const int iy = oy - d.ph + ky * d.dil;
          if (iy < 0 || iy >= d.H) continue;
          const double* rr = row + static_cast<int64_t>(oy) * d.Wo;
          double* xr = xc + static_cast<int64_t>(iy) * d.W;
          for (int ox = 0; ox < d.Wo; ++ox) {
            const int ix = ox - d.pw + kx * d.dil;
            if (ix >= 0 && ix < d.W) xr[ix] += rr[ox];
          }
        }
      }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int groups,
              int dilation, int pad_h, int pad_w) {
  const ConvDims d = conv_dims(x, w, groups, dilation, pad_h, pad_w);
  if (b.defined())
    require(b.ndim() == 1 && b.dim(0) == d.Cout, "conv2d: bias shape");
  const bool rec = b.defined() ? taping({&x, &w, &b}) : taping({&x, &w});
  Tensor out = make_out({d.B, d.Cout, d.Ho, d.Wo}, rec);
  const int rows = d.Cin_g * d.kh * d.kw;
  const int hw = d.Ho * d.Wo;
  const int cout_g = d.Cout / d.groups;
  std::vector<double> col(static_cast<size_t>(rows) * hw);
  for (int bi = 0; bi < d.B; ++bi)
    for (int g = 0; g < d.groups; ++g) {
      const double* xg = x.data().data() +
                         (static_cast<int64_t>(bi) * d.C + g * d.Cin_g) *
                             d.H * d.W;
      im2col(xg, d, col.data());
      const double* wg =
          w.data().data() + static_cast<int64_t>(g) * cout_g * rows;
      double* og = out.data().data() +
                   (static_cast<int64_t>(bi) * d.Cout + g * cout_g) * hw;
      active().gemm_nn(cout_g, hw, rows, wg, rows, col.data(), hw, og, hw,
                       false);
    }
  if (b.defined()) {
    for (int bi = 0; bi < d.B; ++bi)
      for (int co = 0; co < d.Cout; ++co) {
        double* p =
            out.data().data() + (static_cast<int64_t>(bi) * d.Cout + co) * hw;
        const double bv = b.at(co);
        for (int i = 0; i < hw; ++i) p[i] += bv;
      }
  }
  if (rec) {
    auto bimpl = b.defined() ? b.impl() : nullptr;
    GradientTape::current()->record([xi = x.impl(), wi = w.impl(), bimpl,
                                     oi = out.impl(), d, rows, hw, cout_g] {
      std::vector<double> col(static_cast<size_t>(rows) * hw);
      std::vector<double> dcol(static_cast<size_t>(rows) * hw);
      const double* g = oi->grad_ptr();
      for (int bi = 0; bi < d.B; ++bi)
        for (int gr = 0; gr < d.groups; ++gr) {
          const int64_t xoff =
              (static_cast<int64_t>(bi) * d.C + gr * d.Cin_g) * d.H * d.W;
          const double* gg =
              g + (static_cast<int64_t>(bi) * d.Cout + gr * cout_g) * hw;
          if (wi->needs_grad) {
            im2col(xi->data.data() + xoff, d, col.data());
            active().gemm_nt(cout_g, rows, hw, gg, hw, col.data(), hw,
                             wi->grad_ptr() +
                                 static_cast<int64_t>(gr) * cout_g * rows,
                             rows, true);
          }
          if (xi->needs_grad) {
            const double* wg = wi->data.data() +
                               static_cast<int64_t>(gr) * cout_g * rows;
            active().gemm_tn(rows, hw, cout_g, wg, rows, gg, hw, dcol.data(),
                             hw, false);
            col2im_add(dcol.data(), d, xi->grad_ptr() + xoff);
          }
        }
      if (bimpl && bimpl->needs_grad) {
        double* db = bimpl->grad_ptr();
        for (int bi = 0; bi < d.B; ++bi)
          for (int co = 0; co < d.Cout; ++co)
            db[co] += active().vsum(
                hw, g + (static_cast<int64_t>(bi) * d.Cout + co) * hw);
      }
    });
  }
  return out;
}

Tensor conv_transpose2x2(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.ndim() == 4, "conv_transpose2x2: input must be [B,C,H,W]");
  require(w.ndim() == 4 && w.dim(2) == 2 && w.dim(3) == 2,
          "conv_transpose2x2: kernel must be [Cin,Cout,2,2]");
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(w.dim(0) == Cin, "conv_transpose2x2: Cin mismatch");
  const int Cout = w.dim(1);
  if (b.defined())
    require(b.ndim() == 1 && b.dim(0) == Cout, "conv_transpose2x2: bias");
  const bool rec = b.defined() ? taping({&x, &w, &b}) : taping({&x, &w});
  Tensor out = make_out({B, Cout, 2 * H, 2 * W}, rec);
  const int hw = H * W;
  const int c4 = Cout * 4;
  std::vector<double> y4(static_cast<size_t>(c4) * hw);
  for (int bi = 0; bi < B; ++bi) {
    const double* xb = x.data().data() + static_cast<int64_t>(bi) * Cin * hw;
    // w viewed as [Cin, Cout*4]
    active().gemm_tn(c4, hw, Cin, w.data().data(), c4, xb, hw, y4.data(), hw,
                     false);
    for (int co = 0; co < Cout; ++co) {
      const double bv = b.defined() ? b.at(co) : 0.0;
      double* ob = out.data().data() +
                   (static_cast<int64_t>(bi) * Cout + co) * 4 * hw;
      for (int q = 0; q < 4; ++q) {
        const int ky = q / 2, kx = q % 2;
        const double* src = y4.data() + (static_cast<int64_t>(co) * 4 + q) * hw;
        for (int oy = 0; oy < H; ++oy) {
          double* orow = ob + (static_cast<int64_t>(2 * oy + ky)) * 2 * W + kx;
          const double* srow = src + static_cast<int64_t>(oy) * W;
          for (int ox = 0; ox < W; ++ox) orow[2 * ox] = srow[ox] + bv;
        }
      }
    }
  }
  if (rec) {
    auto bimpl = b.defined() ? b.impl() : nullptr;
    GradientTape::current()->record([xi = x.impl(), wi = w.impl(), bimpl,
                                     oi = out.impl(), B, Cin, Cout, H, W, hw,
                                     c4] {
      std::vector<double> gy4(static_cast<size_t>(c4) * hw);
      const double* g = oi->grad_ptr();
      for (int bi = 0; bi < B; ++bi) {
        const double* gb = g + static_cast<int64_t>(bi) * Cout * 4 * hw;
        for (int co = 0; co < Cout; ++co)
          for (int q = 0; q < 4; ++q) {
            const int ky = q / 2, kx = q % 2;
            double* dst = gy4.data() + (static_cast<int64_t>(co) * 4 + q) * hw;
            const double* gco = gb + static_cast<int64_t>(co) * 4 * hw;
            for (int oy = 0; oy < H; ++oy) {
              const double* grow =
                  gco + (static_cast<int64_t>(2 * oy + ky)) * 2 * W + kx;
              double* drow = dst + static_cast<int64_t>(oy) * W;
              for (int ox = 0; ox < W; ++ox) drow[ox] = grow[2 * ox];
            }
          }
        const double* xb = xi->data.data() + static_cast<int64_t>(bi) * Cin * hw;
        if (xi->needs_grad)
          active().gemm_nn(Cin, hw, c4, wi->data.data(), c4, gy4.data(), hw,
                           xi->grad_ptr() + static_cast<int64_t>(bi) * Cin * hw,
                           hw, true);
        if (wi->needs_grad)
          active().gemm_nt(Cin, c4, hw, xb, hw, gy4.data(), hw,
                           wi->grad_ptr(), c4, true);
        if (bimpl && bimpl->needs_grad) {
          double* db = bimpl->grad_ptr();
          for (int co = 0; co < Cout; ++co)
            db[co] += active().vsum(
                4 * hw, gb + static_cast<int64_t>(co) * 4 * hw);
        }
      }
    });
  }
  return out;
}

// ---- wavelets -------------------------------------------------------------

namespace {

// mode 0: forward DWT (input [B,C,H,W] -> 4 x [B,C,H/2,W/2]);
// mode 1: inverse. Both are orthonormal so the adjoint of one is the other.
void haar_fwd(const double* x, int BC, int H, int W, double* ll, double* lh,
              double* hl, double* hh, bool add) {
  const int h2 = H / 2, w2 = W / 2;
  for (int bc = 0; bc < BC; ++bc) {
    const double* xp = x + static_cast<int64_t>(bc) * H * W;
    const int64_t soff = static_cast<int64_t>(bc) * h2 * w2;
    for (int i = 0; i < h2; ++i)
      for (int j = 0; j < w2; ++j) {
        const double a = xp[(2 * i) * W + 2 * j];
        const double b = xp[(2 * i) * W + 2 * j + 1];
        const double c = xp[(2 * i + 1) * W + 2 * j];
        const double d = xp[(2 * i + 1) * W + 2 * j + 1];
        const int64_t o = soff + static_cast<int64_t>(i) * w2 + j;
        if (add) {
          ll[o] += (a + b + c + d) * 0.5;
          lh[o] += (a + b - c - d) * 0.5;
          hl[o] += (a - b + c - d) * 0.5;
          hh[o] += (a - b - c + d) * 0.5;
        } else {
          ll[o] = (a + b + c + d) * 0.5;
          lh[o] = (a + b - c - d) * 0.5;
          hl[o] = (a - b + c - d) * 0.5;
          hh[o] = (a - b - c + d) * 0.5;
        }
      }
  }
}

void haar_inv(const double* ll, const double* lh, const double* hl,
              const double* hh, int BC, int H, int W, double* x, bool add) {
  const int h2 = H / 2, w2 = W / 2;
  for (int bc = 0; bc < BC; ++bc) {
    double* xp = x + static_cast<int64_t>(bc) * H * W;
    const int64_t soff = static_cast<int64_t>(bc) * h2 * w2;
    for (int i = 0; i < h2; ++i)
      for (int j = 0; j < w2; ++j) {
        const int64_t o = soff + static_cast<int64_t>(i) * w2 + j;
        const double L = ll[o], V = lh[o], Hb = hl[o], D = hh[o];
        const double a = (L + V + Hb + D) * 0.5;
        const double b = (L + V - Hb - D) * 0.5;
        const double c = (L - V + Hb - D) * 0.5;
        const double d = (L - V - Hb + D) * 0.5;
        double* p00 = xp + (2 * i) * W + 2 * j;
        double* p10 = xp + (2 * i + 1) * W + 2 * j;
        if (add) {
          p00[0] += a;
          p00[1] += b;
          p10[0] += c;
          p10[1] += d;
        } else {
          p00[0] = a;
          p00[1] = b;
          p10[0] = c;
          p10[1] = d;
        }
      }
  }
}

}  // namespace

Subbands dwt_haar(const Tensor& x) {
  require(x.ndim() == 4, "dwt_haar: expected [B,C,H,W]");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % 2 == 0 && W % 2 == 0, "dwt_haar: H and W must be even");
  const bool rec = taping({&x});
  Subbands s;
  s.ll = make_out({B, C, H / 2, W / 2}, rec);
  s.lh = make_out({B, C, H / 2, W / 2}, rec);
  s.hl = make_out({B, C, H / 2, W / 2}, rec);
  s.hh = make_out({B, C, H / 2, W / 2}, rec);
  haar_fwd(x.data().data(), B * C, H, W, s.ll.data().data(),
           s.lh.data().data(), s.hl.data().data(), s.hh.data().data(), false);
  if (rec) {
    GradientTape::current()->record([xi = x.impl(), li = s.ll.impl(),
                                     vi = s.lh.impl(), hi = s.hl.impl(),
                                     di = s.hh.impl(), B, C, H, W] {
      if (!xi->needs_grad) return;
      haar_inv(li->grad_ptr(), vi->grad_ptr(), hi->grad_ptr(), di->grad_ptr(),
               B * C, H, W, xi->grad_ptr(), true);
    });
  }
  return s;
}

Tensor idwt_haar(const Subbands& s) {
  const Tensor& ll = s.ll;
  require(ll.ndim() == 4, "idwt_haar: expected [B,C,H/2,W/2]");
  require(s.lh.shape() == ll.shape() && s.hl.shape() == ll.shape() &&
              s.hh.shape() == ll.shape(),
          "idwt_haar: subband shape mismatch");
  const int B = ll.dim(0), C = ll.dim(1), H = 2 * ll.dim(2),
            W = 2 * ll.dim(3);
  const bool rec = taping({&s.ll, &s.lh, &s.hl, &s.hh});
  Tensor out = make_out({B, C, H, W}, rec);
  haar_inv(ll.data().data(), s.lh.data().data(), s.hl.data().data(),
           s.hh.data().data(), B * C, H, W, out.data().data(), false);
  if (rec) {
    GradientTape::current()->record([li = s.ll.impl(), vi = s.lh.impl(),
                                     hi = s.hl.impl(), di = s.hh.impl(),
                                     oi = out.impl(), B, C, H, W] {
      std::vector<double> dll(li->data.size()), dlh(li->data.size()),
          dhl(li->data.size()), dhh(li->data.size());
      haar_fwd(oi->grad_ptr(), B * C, H, W, dll.data(), dlh.data(),
               dhl.data(), dhh.data(), false);
      auto addto = [](std::shared_ptr<TensorImpl> t,
                      const std::vector<double>& g) {
        if (!t->needs_grad) return;
        active().axpy(static_cast<int>(g.size()), 1.0, g.data(),
                      t->grad_ptr());
      };
      addto(li, dll);
      addto(vi, dlh);
      addto(hi, dhl);
      addto(di, dhh);
    });
  }
  return out;
}

// ---- resampling -----------------------------------------------------------

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  require(x.ndim() == 4, "bilinear_resize: expected [B,C,H,W]");
  require(out_h >= 1 && out_w >= 1, "bilinear_resize: bad target size");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (out_h == H && out_w == W) return reshape(x, x.shape());
  struct Tap {
    int i0, i1;
    double w0, w1;
  };
  auto make_taps = [](int in, int out) {
    std::vector<Tap> taps(static_cast<size_t>(out));
    const double r = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double s = (o + 0.5) * r - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, in - 1);
      const double f = s - i0;
      taps[static_cast<size_t>(o)] = {i0, i1, 1.0 - f, f};
    }
    return taps;
  };
  const auto ty = make_taps(H, out_h);
  const auto tx = make_taps(W, out_w);
  const bool rec = taping({&x});
  Tensor out = make_out({B, C, out_h, out_w}, rec);
  for (int bc = 0; bc < B * C; ++bc) {
    const double* xp = x.data().data() + static_cast<int64_t>(bc) * H * W;
    double* op =
        out.data().data() + static_cast<int64_t>(bc) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const Tap& y = ty[static_cast<size_t>(oy)];
      for (int ox = 0; ox < out_w; ++ox) {
        const Tap& xw = tx[static_cast<size_t>(ox)];
        op[static_cast<int64_t>(oy) * out_w + ox] =
            y.w0 * (xw.w0 * xp[y.i0 * W + xw.i0] +
                    xw.w1 * xp[y.i0 * W + xw.i1]) +
            y.w1 * (xw.w0 * xp[y.i1 * W + xw.i0] +
                    xw.w1 * xp[y.i1 * W + xw.i1]);
      }
    }
  }
  if (rec) {
    GradientTape::current()->record([xi = x.impl(), oi = out.impl(), B, C, H,
                                     W, out_h, out_w, ty, tx] {
      if (!xi->needs_grad) return;
      const double* g = oi->grad_ptr();
      double* dx = xi->grad_ptr();
      for (int bc = 0; bc < B * C; ++bc) {
        double* dp = dx + static_cast<int64_t>(bc) * H * W;
        const double* gp = g + static_cast<int64_t>(bc) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
          const Tap& y = ty[static_cast<size_t>(oy)];
          for (int ox = 0; ox < out_w; ++ox) {
            const Tap& xw = tx[static_cast<size_t>(ox)];
            const double gv = gp[static_cast<int64_t>(oy) * out_w + ox];
            dp[y.i0 * W + xw.i0] += gv * y.w0 * xw.w0;
            dp[y.i0 * W + xw.i1] += gv * y.w0 * xw.w1;
            dp[y.i1 * W + xw.i0] += gv * y.w1 * xw.w0;
            dp[y.i1 * W + xw.i1] += gv * y.w1 * xw.w1;
          }
        }
      }
    });
  }
  return out;
}

// ---- losses ---------------------------------------------------------------

Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits_mean");
  const int64_t n = logits.size();
  const bool rec = taping({&logits});
  Tensor out = make_out({1}, rec);
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double z = logits.at(i), y = targets.at(i);
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  out.at(0) = acc / static_cast<double>(n);
  if (rec) {
    GradientTape::current()->record([li = logits.impl(), ti = targets.impl(),
                                     oi = out.impl(), n] {
      if (!li->needs_grad) return;
      const double g = oi->grad_ptr()[0] / static_cast<double>(n);
      double* dl = li->grad_ptr();
      for (int64_t i = 0; i < n; ++i)
        dl[i] += g * (stable_sigmoid(li->data[static_cast<size_t>(i)]) -
                      ti->data[static_cast<size_t>(i)]);
    });
  }
  return out;
}

// ---- verification oracle --------------------------------------------------

Tensor fd_gradient(const std::function<double(const Tensor&)>& f,
                   const Tensor& x, double eps) {
  if (eps <= 0.0) throw UsageError("fd_gradient: eps must be positive");
  Tensor g = Tensor::zeros(x.shape());
  Tensor probe = Tensor::from_data(x.shape(), x.data());
  for (int64_t i = 0; i < x.size(); ++i) {
    const double orig = probe.at(i);
    probe.at(i) = orig + eps;
    const double fp = f(probe);
    probe.at(i) = orig - eps;
    const double fm = f(probe);
    probe.at(i) = orig;
    g.at(i) = (fp - fm) / (2.0 * eps);
  }
  return g;
}

}  // namespace wildsam::ops

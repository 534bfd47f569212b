#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dance/nn/tensor.hpp"

// Forward and reverse-mode kernels for each layer kind. Backward functions
// accumulate (+=) into the gradient buffers they are given.
namespace dance::nn {

struct ConvGeometry {
  int in_ch = 0, out_ch = 0, kernel = 1, stride = 1, dilation = 1, padding = 0;

  int out_dim(int in) const { return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel;
  }
};

namespace detail {

// Range of output positions o with 0 <= o*stride - pad + offset < in.
inline void valid_range(int in, int out, int stride, int pad, int offset, int& lo, int& hi) {
  const int shift = offset - pad;
  lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
  const int last = in - 1 - shift;
  hi = last < 0 ? -1 : std::min(out - 1, last / stride);
}

inline bool plane_is_zero(const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (p[i] != 0.0) return false;
  return true;
}

}  // namespace detail

inline Tensor conv2d_forward(const Tensor& in, std::span<const double> weight,
                             std::span<const double> bias, const ConvGeometry& g) {
  if (in.c != g.in_ch) throw ShapeError("conv2d: input channel mismatch");
  const int oh = g.out_dim(in.h), ow = g.out_dim(in.w);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: non-positive output dims");
  Tensor out(in.n, g.out_ch, oh, ow);
  const int k = g.kernel;
  for (int n = 0; n < in.n; ++n) {
    std::vector<char> zero_in(g.in_ch);
    for (int ic = 0; ic < g.in_ch; ++ic) zero_in[ic] = detail::plane_is_zero(in.ptr(n, ic), in.plane());
    for (int oc = 0; oc < g.out_ch; ++oc) {
      double* o = out.ptr(n, oc);
      if (!bias.empty()) std::fill(o, o + out.plane(), bias[oc]);
      for (int ic = 0; ic < g.in_ch; ++ic) {
        if (zero_in[ic]) continue;
        const double* src = in.ptr(n, ic);
        const double* wk = &weight[(static_cast<std::size_t>(oc) * g.in_ch + ic) * k * k];
        for (int ky = 0; ky < k; ++ky) {
          int y_lo, y_hi;
          detail::valid_range(in.h, oh, g.stride, g.padding, ky * g.dilation, y_lo, y_hi);
          for (int kx = 0; kx < k; ++kx) {
            const double wv = wk[ky * k + kx];
            if (wv == 0.0) continue;
            int x_lo, x_hi;
            detail::valid_range(in.w, ow, g.stride, g.padding, kx * g.dilation, x_lo, x_hi);
            const int xoff = kx * g.dilation - g.padding;
            for (int oy = y_lo; oy <= y_hi; ++oy) {
              const double* srow = src + static_cast<std::size_t>(oy * g.stride - g.padding + ky * g.dilation) * in.w;
              double* orow = o + static_cast<std::size_t>(oy) * ow;
              if (g.stride == 1) {
                for (int ox = x_lo; ox <= x_hi; ++ox) orow[ox] += wv * srow[ox + xoff];
              } else {
                for (int ox = x_lo; ox <= x_hi; ++ox) orow[ox] += wv * srow[ox * g.stride + xoff];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

// grad_in may be null when the input gradient is not needed.
inline void conv2d_backward(const Tensor& in, std::span<const double> weight, const Tensor& grad_out,
                            const ConvGeometry& g, Tensor* grad_in, std::span<double> grad_w,
                            std::span<double> grad_b) {
  const int oh = grad_out.h, ow = grad_out.w, k = g.kernel;
  for (int n = 0; n < in.n; ++n) {
    std::vector<char> zero_in(g.in_ch);
    for (int ic = 0; ic < g.in_ch; ++ic) zero_in[ic] = detail::plane_is_zero(in.ptr(n, ic), in.plane());
    for (int oc = 0; oc < g.out_ch; ++oc) {
      const double* go = grad_out.ptr(n, oc);
      if (detail::plane_is_zero(go, grad_out.plane())) continue;
      if (!grad_b.empty()) {
        double s = 0.0;
        for (std::size_t i = 0; i < grad_out.plane(); ++i) s += go[i];
        grad_b[oc] += s;
      }
      for (int ic = 0; ic < g.in_ch; ++ic) {
        const double* src = in.ptr(n, ic);
        double* gi = grad_in ? grad_in->ptr(n, ic) : nullptr;
        const std::size_t wbase = (static_cast<std::size_t>(oc) * g.in_ch + ic) * k * k;
        for (int ky = 0; ky < k; ++ky) {
          int y_lo, y_hi;
          detail::valid_range(in.h, oh, g.stride, g.padding, ky * g.dilation, y_lo, y_hi);
          for (int kx = 0; kx < k; ++kx) {
            int x_lo, x_hi;
            detail::valid_range(in.w, ow, g.stride, g.padding, kx * g.dilation, x_lo, x_hi);
            const int xoff = kx * g.dilation - g.padding;
            const double wv = weight[wbase + ky * k + kx];
            double acc = 0.0;
            for (int oy = y_lo; oy <= y_hi; ++oy) {
              const std::size_t irow = static_cast<std::size_t>(oy * g.stride - g.padding + ky * g.dilation) * in.w;
              const double* gorow = go + static_cast<std::size_t>(oy) * ow;
              if (!zero_in[ic]) {
                const double* srow = src + irow;
                for (int ox = x_lo; ox <= x_hi; ++ox) acc += gorow[ox] * srow[ox * g.stride + xoff];
              }
              if (gi && wv != 0.0) {
                double* girow = gi + irow;
                for (int ox = x_lo; ox <= x_hi; ++ox) girow[ox * g.stride + xoff] += wv * gorow[ox];
              }
            }
            grad_w[wbase + ky * k + kx] += acc;
          }
        }
      }
    }
  }
}

// Per-channel statistics kept from a training-mode forward pass.
struct BatchNormCache {
  std::vector<double> mean, var, inv_std;
  Tensor xhat;
};

// Training-mode batch norm over (N, H, W). Channels with mask[c] == 0 output zero.
inline Tensor batchnorm_forward_train(const Tensor& in, std::span<const double> gamma,
                                      std::span<const double> beta, std::span<const unsigned char> mask,
                                      double eps, BatchNormCache& cache) {
  Tensor out(in.n, in.c, in.h, in.w);
  cache.mean.assign(in.c, 0.0);
  cache.var.assign(in.c, 0.0);
  cache.inv_std.assign(in.c, 0.0);
  cache.xhat = Tensor(in.n, in.c, in.h, in.w);
  const double m = static_cast<double>(in.n) * in.plane();
  for (int c = 0; c < in.c; ++c) {
    double s = 0.0;
    for (int n = 0; n < in.n; ++n) {
      const double* x = in.ptr(n, c);
      for (std::size_t i = 0; i < in.plane(); ++i) s += x[i];
    }
    const double mu = s / m;
    double sq = 0.0;
    for (int n = 0; n < in.n; ++n) {
      const double* x = in.ptr(n, c);
      for (std::size_t i = 0; i < in.plane(); ++i) sq += (x[i] - mu) * (x[i] - mu);
    }
    const double var = sq / m;
    const double inv = 1.0 / std::sqrt(var + eps);
    cache.mean[c] = mu;
    cache.var[c] = var;
    cache.inv_std[c] = inv;
    const bool live = mask.empty() || mask[c];
    for (int n = 0; n < in.n; ++n) {
      const double* x = in.ptr(n, c);
      double* xh = cache.xhat.ptr(n, c);
      double* y = out.ptr(n, c);
      for (std::size_t i = 0; i < in.plane(); ++i) {
        xh[i] = (x[i] - mu) * inv;
        y[i] = live ? gamma[c] * xh[i] + beta[c] : 0.0;
      }
    }
  }
  return out;
}

inline void batchnorm_backward_train(const Tensor& grad_out, std::span<const double> gamma,
                                     std::span<const unsigned char> mask, const BatchNormCache& cache,
                                     Tensor& grad_in, std::span<double> grad_gamma,
                                     std::span<double> grad_beta) {
  const double m = static_cast<double>(grad_out.n) * grad_out.plane();
  for (int c = 0; c < grad_out.c; ++c) {
    if (!mask.empty() && !mask[c]) continue;
    double sdy = 0.0, sdyx = 0.0;
    for (int n = 0; n < grad_out.n; ++n) {
      const double* dy = grad_out.ptr(n, c);
      const double* xh = cache.xhat.ptr(n, c);
      for (std::size_t i = 0; i < grad_out.plane(); ++i) {
        sdy += dy[i];
        sdyx += dy[i] * xh[i];
      }
    }
    grad_gamma[c] += sdyx;
    grad_beta[c] += sdy;
    const double gm = gamma[c] * cache.inv_std[c] / m;
    for (int n = 0; n < grad_out.n; ++n) {
      const double* dy = grad_out.ptr(n, c);
      const double* xh = cache.xhat.ptr(n, c);
      double* dx = grad_in.ptr(n, c);
      for (std::size_t i = 0; i < grad_out.plane(); ++i) dx[i] += gm * (m * dy[i] - sdy - xh[i] * sdyx);
    }
  }
}

inline Tensor batchnorm_forward_eval(const Tensor& in, std::span<const double> gamma,
                                     std::span<const double> beta, std::span<const unsigned char> mask,
                                     std::span<const double> running_mean,
                                     std::span<const double> running_var, double eps) {
  Tensor out(in.n, in.c, in.h, in.w);
  for (int c = 0; c < in.c; ++c) {
    if (!mask.empty() && !mask[c]) continue;
    const double scale = gamma[c] / std::sqrt(running_var[c] + eps);
    const double shift = beta[c] - scale * running_mean[c];
    for (int n = 0; n < in.n; ++n) {
      const double* x = in.ptr(n, c);
      double* y = out.ptr(n, c);
      for (std::size_t i = 0; i < in.plane(); ++i) y[i] = scale * x[i] + shift;
    }
  }
  return out;
}

inline Tensor relu_forward(const Tensor& in) {
  Tensor out = in;
  for (double& x : out.v) x = x > 0.0 ? x : 0.0;
  return out;
}

// Uses the forward output: d/dx relu(x) = [y > 0].
inline void relu_backward(const Tensor& out, const Tensor& grad_out, Tensor& grad_in) {
  for (std::size_t i = 0; i < out.v.size(); ++i)
    if (out.v[i] > 0.0) grad_in.v[i] += grad_out.v[i];
}

// Bilinear interpolation taps along one axis (half-pixel centers, edge clamp).
struct InterpAxis {
  std::vector<int> i0, i1;
  std::vector<double> f;
};

inline InterpAxis interp_axis(int src, int dst) {
  InterpAxis a;
  a.i0.resize(dst);
  a.i1.resize(dst);
  a.f.resize(dst);
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * static_cast<double>(src) / dst - 0.5;
    s = std::clamp(s, 0.0, src - 1.0);
    a.i0[i] = static_cast<int>(std::floor(s));
    a.i1[i] = std::min(a.i0[i] + 1, src - 1);
    a.f[i] = s - a.i0[i];
  }
  return a;
}

inline Tensor upsample_forward(const Tensor& in, int out_h, int out_w) {
  if (out_h == in.h && out_w == in.w) return in;
  Tensor out(in.n, in.c, out_h, out_w);
  const InterpAxis ay = interp_axis(in.h, out_h), ax = interp_axis(in.w, out_w);
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c) {
      const double* s = in.ptr(n, c);
      double* o = out.ptr(n, c);
      for (int y = 0; y < out_h; ++y) {
        const double* r0 = s + static_cast<std::size_t>(ay.i0[y]) * in.w;
        const double* r1 = s + static_cast<std::size_t>(ay.i1[y]) * in.w;
        const double fy = ay.f[y];
        for (int x = 0; x < out_w; ++x) {
          const double fx = ax.f[x];
          const double top = r0[ax.i0[x]] * (1.0 - fx) + r0[ax.i1[x]] * fx;
          const double bot = r1[ax.i0[x]] * (1.0 - fx) + r1[ax.i1[x]] * fx;
          o[static_cast<std::size_t>(y) * out_w + x] = top * (1.0 - fy) + bot * fy;
        }
      }
    }
  return out;
}

inline void upsample_backward(const Tensor& grad_out, Tensor& grad_in) {
  if (grad_out.same_shape(grad_in)) {
    for (std::size_t i = 0; i < grad_in.v.size(); ++i) grad_in.v[i] += grad_out.v[i];
    return;
  }
  const InterpAxis ay = interp_axis(grad_in.h, grad_out.h), ax = interp_axis(grad_in.w, grad_out.w);
  for (int n = 0; n < grad_out.n; ++n)
    for (int c = 0; c < grad_out.c; ++c) {
      const double* go = grad_out.ptr(n, c);
      double* gi = grad_in.ptr(n, c);
      for (int y = 0; y < grad_out.h; ++y) {
        double* r0 = gi + static_cast<std::size_t>(ay.i0[y]) * grad_in.w;
        double* r1 = gi + static_cast<std::size_t>(ay.i1[y]) * grad_in.w;
        const double fy = ay.f[y];
        for (int x = 0; x < grad_out.w; ++x) {
          const double g = go[static_cast<std::size_t>(y) * grad_out.w + x];
          const double fx = ax.f[x];
          r0[ax.i0[x]] += g * (1.0 - fx) * (1.0 - fy);
          r0[ax.i1[x]] += g * fx * (1.0 - fy);
          r1[ax.i0[x]] += g * (1.0 - fx) * fy;
          r1[ax.i1[x]] += g * fx * fy;
        }
      }
    }
}

inline Tensor concat_forward(std::span<const Tensor* const> ins) {
  int c = 0;
  for (const Tensor* t : ins) {
    if (t->n != ins[0]->n || t->h != ins[0]->h || t->w != ins[0]->w) throw ShapeError("concat: shape mismatch");
    c += t->c;
  }
  Tensor out(ins[0]->n, c, ins[0]->h, ins[0]->w);
  for (int n = 0; n < out.n; ++n) {
    int off = 0;
    for (const Tensor* t : ins) {
      std::copy(t->ptr(n, 0), t->ptr(n, 0) + t->plane() * t->c, out.ptr(n, off));
      off += t->c;
    }
  }
  return out;
}

// grad_ins[i] receives the channel slice belonging to input i.
inline void concat_backward(const Tensor& grad_out, std::span<Tensor* const> grad_ins) {
  for (int n = 0; n < grad_out.n; ++n) {
    int off = 0;
    for (Tensor* g : grad_ins) {
      const double* src = grad_out.ptr(n, off);
      double* dst = g->ptr(n, 0);
      for (std::size_t i = 0; i < g->plane() * g->c; ++i) dst[i] += src[i];
      off += g->c;
    }
  }
}

inline Tensor add_forward(std::span<const Tensor* const> ins) {
  Tensor out = *ins[0];
  for (std::size_t k = 1; k < ins.size(); ++k) {
    if (!ins[k]->same_shape(out)) throw ShapeError("add: shape mismatch");
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += ins[k]->v[i];
  }
  return out;
}

inline void add_backward(const Tensor& grad_out, std::span<Tensor* const> grad_ins) {
  for (Tensor* g : grad_ins)
    for (std::size_t i = 0; i < g->v.size(); ++i) g->v[i] += grad_out.v[i];
}

}  // namespace dance::nn

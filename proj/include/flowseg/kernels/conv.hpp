#pragma once

// Convolution kernels. Batch items are processed in parallel; each item uses
// im2col followed by a GEMM. Weight gradients are accumulated per item and
// reduced in item order so results do not depend on the thread count.

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "flowseg/kernels/gemm.hpp"
#include "flowseg/tensor.hpp"

namespace flowseg::kernels {

struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int pad = 1;

  int conv_out(int in, int k) const { return (in + 2 * pad - k) / stride + 1; }
  int out_h(int in_h) const { return conv_out(in_h, kernel_h); }
  int out_w(int in_w) const { return conv_out(in_w, kernel_w); }
  // Transposed convolution output extent.
  int deconv_h(int in_h) const { return (in_h - 1) * stride - 2 * pad + kernel_h; }
  int deconv_w(int in_w) const { return (in_w - 1) * stride - 2 * pad + kernel_w; }
};

/// x: (C,H,W) -> col: (C*kh*kw, oh*ow)
template <typename T>
void im2col(const T* x, int channels, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, T* col) {
  const int plane = oh * ow;
  for (int c = 0; c < channels; ++c) {
    const T* xc = x + c * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + ((c * kh + ky) * kw + kx) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + oy * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = xc + iy * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: accumulates col into x (x must be zeroed by the caller).
template <typename T>
void col2im(const T* col, int channels, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, T* x) {
  const int plane = oh * ow;
  for (int c = 0; c < channels; ++c) {
    T* xc = x + c * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col + ((c * kh + ky) * kw + kx) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + oy * ow;
          T* dst = xc + iy * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

namespace detail {
inline bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad == 0;
}

template <typename T>
void reduce_items(const std::vector<std::vector<T>>& parts, T* dst) {
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.size(); ++i) dst[i] += p[i];
  }
}
}  // namespace detail

/// weight: (Co,Ci,kh,kw), bias: (Co) or null.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const T* weight, const T* bias,
                              const ConvGeometry& g) {
  if (x.c() != g.in_channels) throw std::invalid_argument("conv2d: channel mismatch");
  const int oh = g.out_h(x.h());
  const int ow = g.out_w(x.w());
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output");
  BasicTensor<T> out(x.n(), g.out_channels, oh, ow);
  const int kdim = g.in_channels * g.kernel_h * g.kernel_w;
  const int plane = oh * ow;
  const bool pointwise = detail::is_pointwise(g);

#pragma omp parallel for schedule(static) if (x.n() > 1)
  for (int i = 0; i < x.n(); ++i) {
    std::vector<T> col;
    const T* cols = x.item(i);
    if (!pointwise) {
      col.resize(static_cast<std::size_t>(kdim) * plane);
      im2col(x.item(i), g.in_channels, x.h(), x.w(), g.kernel_h, g.kernel_w, g.stride, g.pad,
             oh, ow, col.data());
      cols = col.data();
    }
    T* y = out.item(i);
    gemm(weight, cols, y, g.out_channels, plane, kdim);
    if (bias != nullptr) {
      for (int o = 0; o < g.out_channels; ++o) {
        T* yo = y + o * plane;
        for (int p = 0; p < plane; ++p) yo[p] += bias[o];
      }
    }
  }
  return out;
}

/// Gradients of conv2d. dx may be null; dweight/dbias are accumulated.
template <typename T>
void conv2d_backward(const BasicTensor<T>& x, const T* weight, const BasicTensor<T>& dy,
                     const ConvGeometry& g, BasicTensor<T>* dx, T* dweight, T* dbias) {
  const int oh = dy.h();
  const int ow = dy.w();
  const int kdim = g.in_channels * g.kernel_h * g.kernel_w;
  const int plane = oh * ow;
  const bool pointwise = detail::is_pointwise(g);
  const std::size_t wsize = static_cast<std::size_t>(g.out_channels) * kdim;
  if (dx != nullptr) *dx = BasicTensor<T>(x.shape());

  std::vector<std::vector<T>> dw_parts(dweight ? x.n() : 0);
  std::vector<std::vector<T>> db_parts(dbias ? x.n() : 0);

#pragma omp parallel for schedule(static) if (x.n() > 1)
  for (int i = 0; i < x.n(); ++i) {
    std::vector<T> col;
    const T* cols = x.item(i);
    if (!pointwise) {
      col.resize(static_cast<std::size_t>(kdim) * plane);
      im2col(x.item(i), g.in_channels, x.h(), x.w(), g.kernel_h, g.kernel_w, g.stride, g.pad,
             oh, ow, col.data());
      cols = col.data();
    }
    const T* dyi = dy.item(i);
    if (dweight != nullptr) {
      dw_parts[i].assign(wsize, T(0));
      gemm_bt(dyi, cols, dw_parts[i].data(), g.out_channels, kdim, plane);
    }
    if (dbias != nullptr) {
      db_parts[i].assign(g.out_channels, T(0));
      for (int o = 0; o < g.out_channels; ++o) {
        T s = 0;
        const T* d = dyi + o * plane;
        for (int p = 0; p < plane; ++p) s += d[p];
        db_parts[i][o] = s;
      }
    }
    if (dx != nullptr) {
      if (pointwise) {
        gemm_at(weight, dyi, dx->item(i), kdim, plane, g.out_channels);
      } else {
        std::vector<T> dcol(static_cast<std::size_t>(kdim) * plane);
        gemm_at(weight, dyi, dcol.data(), kdim, plane, g.out_channels);
        col2im(dcol.data(), g.in_channels, x.h(), x.w(), g.kernel_h, g.kernel_w, g.stride,
               g.pad, oh, ow, dx->item(i));
      }
    }
  }
  if (dweight != nullptr) detail::reduce_items(dw_parts, dweight);
  if (dbias != nullptr) detail::reduce_items(db_parts, dbias);
}

/// Transposed convolution. weight: (Ci,Co,kh,kw).
template <typename T>
BasicTensor<T> deconv2d_forward(const BasicTensor<T>& x, const T* weight, const T* bias,
                                const ConvGeometry& g) {
  if (x.c() != g.in_channels) throw std::invalid_argument("deconv2d: channel mismatch");
  const int oh = g.deconv_h(x.h());
  const int ow = g.deconv_w(x.w());
  BasicTensor<T> out(x.n(), g.out_channels, oh, ow);
  const int kdim = g.out_channels * g.kernel_h * g.kernel_w;
  const int iplane = x.h() * x.w();
  const int oplane = oh * ow;

#pragma omp parallel for schedule(static) if (x.n() > 1)
  for (int i = 0; i < x.n(); ++i) {
    std::vector<T> col(static_cast<std::size_t>(kdim) * iplane);
    gemm_at(weight, x.item(i), col.data(), kdim, iplane, g.in_channels);
    T* y = out.item(i);
    col2im(col.data(), g.out_channels, oh, ow, g.kernel_h, g.kernel_w, g.stride, g.pad, x.h(),
           x.w(), y);
    if (bias != nullptr) {
      for (int o = 0; o < g.out_channels; ++o) {
        T* yo = y + o * oplane;
        for (int p = 0; p < oplane; ++p) yo[p] += bias[o];
      }
    }
  }
  return out;
}

template <typename T>
void deconv2d_backward(const BasicTensor<T>& x, const T* weight, const BasicTensor<T>& dy,
                       const ConvGeometry& g, BasicTensor<T>* dx, T* dweight, T* dbias) {
  const int kdim = g.out_channels * g.kernel_h * g.kernel_w;
  const int iplane = x.h() * x.w();
  const int oplane = dy.h() * dy.w();
  const std::size_t wsize = static_cast<std::size_t>(g.in_channels) * kdim;
  if (dx != nullptr) *dx = BasicTensor<T>(x.shape());

  std::vector<std::vector<T>> dw_parts(dweight ? x.n() : 0);
  std::vector<std::vector<T>> db_parts(dbias ? x.n() : 0);

#pragma omp parallel for schedule(static) if (x.n() > 1)
  for (int i = 0; i < x.n(); ++i) {
    std::vector<T> dcol(static_cast<std::size_t>(kdim) * iplane);
    im2col(dy.item(i), g.out_channels, dy.h(), dy.w(), g.kernel_h, g.kernel_w, g.stride, g.pad,
           x.h(), x.w(), dcol.data());
    if (dx != nullptr) gemm(weight, dcol.data(), dx->item(i), g.in_channels, iplane, kdim);
    if (dweight != nullptr) {
      dw_parts[i].assign(wsize, T(0));
      gemm_bt(x.item(i), dcol.data(), dw_parts[i].data(), g.in_channels, kdim, iplane);
    }
    if (dbias != nullptr) {
      db_parts[i].assign(g.out_channels, T(0));
      const T* dyi = dy.item(i);
      for (int o = 0; o < g.out_channels; ++o) {
        T s = 0;
        for (int p = 0; p < oplane; ++p) s += dyi[o * oplane + p];
        db_parts[i][o] = s;
      }
    }
  }
  if (dweight != nullptr) detail::reduce_items(dw_parts, dweight);
  if (dbias != nullptr) detail::reduce_items(db_parts, dbias);
}

/// Depthwise convolution (one kh x kw filter per channel). weight: (C,1,kh,kw).
template <typename T>
BasicTensor<T> depthwise_forward(const BasicTensor<T>& x, const T* weight, const T* bias,
                                 const ConvGeometry& g) {
  if (x.c() != g.in_channels || g.out_channels != g.in_channels) {
    throw std::invalid_argument("depthwise: channel mismatch");
  }
  const int oh = g.out_h(x.h());
  const int ow = g.out_w(x.w());
  BasicTensor<T> out(x.n(), x.c(), oh, ow);
  const int planes = x.n() * x.c();

#pragma omp parallel for schedule(static) if (planes > 8)
  for (int nc = 0; nc < planes; ++nc) {
    const int i = nc / x.c();
    const int c = nc % x.c();
    const T* xp = x.plane(i, c);
    const T* k = weight + c * g.kernel_h * g.kernel_w;
    T* yp = out.plane(i, c);
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T s = bias ? bias[c] : T(0);
        for (int ky = 0; ky < g.kernel_h; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= x.h()) continue;
          for (int kx = 0; kx < g.kernel_w; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= x.w()) continue;
            s += k[ky * g.kernel_w + kx] * xp[iy * x.w() + ix];
          }
        }
        yp[oy * ow + ox] = s;
      }
    }
  }
  return out;
}

template <typename T>
void depthwise_backward(const BasicTensor<T>& x, const T* weight, const BasicTensor<T>& dy,
                        const ConvGeometry& g, BasicTensor<T>* dx, T* dweight, T* dbias) {
  const int kk = g.kernel_h * g.kernel_w;
  if (dx != nullptr) *dx = BasicTensor<T>(x.shape());
  const int planes = x.n() * x.c();
  std::vector<std::vector<T>> dw_parts(planes, std::vector<T>(kk + 1, T(0)));

#pragma omp parallel for schedule(static) if (planes > 8)
  for (int nc = 0; nc < planes; ++nc) {
    const int i = nc / x.c();
    const int c = nc % x.c();
    const T* xp = x.plane(i, c);
    const T* dyp = dy.plane(i, c);
    const T* k = weight + c * kk;
    T* dxp = dx ? dx->plane(i, c) : nullptr;
    auto& part = dw_parts[nc];
    for (int oy = 0; oy < dy.h(); ++oy) {
      for (int ox = 0; ox < dy.w(); ++ox) {
        const T d = dyp[oy * dy.w() + ox];
        part[kk] += d;
        for (int ky = 0; ky < g.kernel_h; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= x.h()) continue;
          for (int kx = 0; kx < g.kernel_w; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= x.w()) continue;
            part[ky * g.kernel_w + kx] += d * xp[iy * x.w() + ix];
            if (dxp) dxp[iy * x.w() + ix] += d * k[ky * g.kernel_w + kx];
          }
        }
      }
    }
  }
  for (int nc = 0; nc < planes; ++nc) {
    const int c = nc % x.c();
    if (dweight) {
      for (int j = 0; j < kk; ++j) dweight[c * kk + j] += dw_parts[nc][j];
    }
    if (dbias) dbias[c] += dw_parts[nc][kk];
  }
}

}  // namespace flowseg::kernels

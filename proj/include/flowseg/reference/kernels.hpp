#pragma once

// Serial direct-loop versions of the parallel kernels. They share no code with
// flowseg::kernels and are kept for tests and the benchmark.

#include <cmath>

#include "flowseg/kernels/conv.hpp"
#include "flowseg/tensor.hpp"

namespace flowseg::reference {

using kernels::ConvGeometry;

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const T* weight, const T* bias,
                      const ConvGeometry& g) {
  const int oh = g.out_h(x.h());
  const int ow = g.out_w(x.w());
  BasicTensor<T> out(x.n(), g.out_channels, oh, ow);
  for (int i = 0; i < x.n(); ++i)
    for (int o = 0; o < g.out_channels; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T s = bias ? bias[o] : T(0);
          for (int c = 0; c < g.in_channels; ++c)
            for (int ky = 0; ky < g.kernel_h; ++ky)
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                s += weight[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] *
                     x.at(i, c, iy, ix);
              }
          out.at(i, o, oy, ox) = s;
        }
  return out;
}

/// Transposed convolution by direct scatter. weight: (Ci,Co,kh,kw).
template <typename T>
BasicTensor<T> deconv2d(const BasicTensor<T>& x, const T* weight, const T* bias,
                        const ConvGeometry& g) {
  const int oh = g.deconv_h(x.h());
  const int ow = g.deconv_w(x.w());
  BasicTensor<T> out(x.n(), g.out_channels, oh, ow);
  for (int i = 0; i < x.n(); ++i) {
    for (int o = 0; o < g.out_channels; ++o)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) out.at(i, o, y, xx) = bias ? bias[o] : T(0);
    for (int c = 0; c < g.in_channels; ++c)
      for (int iy = 0; iy < x.h(); ++iy)
        for (int ix = 0; ix < x.w(); ++ix)
          for (int o = 0; o < g.out_channels; ++o)
            for (int ky = 0; ky < g.kernel_h; ++ky)
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int oy = iy * g.stride - g.pad + ky;
                const int ox = ix * g.stride - g.pad + kx;
                if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                out.at(i, o, oy, ox) +=
                    weight[((c * g.out_channels + o) * g.kernel_h + ky) * g.kernel_w + kx] *
                    x.at(i, c, iy, ix);
              }
  }
  return out;
}

/// Depthwise 3x3 followed by pointwise 1x1, computed directly.
template <typename T>
BasicTensor<T> separable_conv2d(const BasicTensor<T>& x, const T* dw_weight, const T* dw_bias,
                                const T* pw_weight, const T* pw_bias, int out_channels,
                                int kernel, int stride, int pad) {
  const int c_in = x.c();
  const int oh = (x.h() + 2 * pad - kernel) / stride + 1;
  const int ow = (x.w() + 2 * pad - kernel) / stride + 1;
  BasicTensor<T> mid(x.n(), c_in, oh, ow);
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < c_in; ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T s = dw_bias ? dw_bias[c] : T(0);
          for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
              s += dw_weight[(c * kernel + ky) * kernel + kx] * x.at(i, c, iy, ix);
            }
          mid.at(i, c, oy, ox) = s;
        }
  BasicTensor<T> out(x.n(), out_channels, oh, ow);
  for (int i = 0; i < x.n(); ++i)
    for (int o = 0; o < out_channels; ++o)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          T s = pw_bias ? pw_bias[o] : T(0);
          for (int c = 0; c < c_in; ++c) s += pw_weight[o * c_in + c] * mid.at(i, c, y, xx);
          out.at(i, o, y, xx) = s;
        }
  return out;
}

/// Backward warp evaluated as an explicit sum over the four neighbours with
/// per-neighbour bounds checks.
template <typename T>
BasicTensor<T> warp(const BasicTensor<T>& src, const BasicTensor<T>& flow) {
  BasicTensor<T> out(src.shape());
  for (int i = 0; i < src.n(); ++i)
    for (int c = 0; c < src.c(); ++c)
      for (int y = 0; y < src.h(); ++y)
        for (int x = 0; x < src.w(); ++x) {
          const double sx = x + static_cast<double>(flow.at(i, 0, y, x));
          const double sy = y + static_cast<double>(flow.at(i, 1, y, x));
          const double fx = std::floor(sx);
          const double fy = std::floor(sy);
          double acc = 0;
          for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
              const double px = fx + dx;
              const double py = fy + dy;
              if (px < 0 || py < 0 || px > src.w() - 1 || py > src.h() - 1) continue;
              const double wgt = (1.0 - std::abs(sx - px)) * (1.0 - std::abs(sy - py));
              acc += wgt * src.at(i, c, static_cast<int>(py), static_cast<int>(px));
            }
          out.at(i, c, y, x) = static_cast<T>(acc);
        }
  return out;
}

}  // namespace flowseg::reference

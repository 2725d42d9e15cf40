#pragma once

// Bilinear resize with half-pixel centres and edge clamping
// (src = (dst + 0.5) * in / out - 0.5).

#include <algorithm>
#include <vector>

#include "flowseg/tensor.hpp"

namespace flowseg::kernels {

struct ResizeTap {
  int i0 = 0;
  int i1 = 0;
  double frac = 0;
};

inline std::vector<ResizeTap> resize_taps(int in, int out) {
  std::vector<ResizeTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    int i0 = static_cast<int>(s);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, s - i0};
  }
  return taps;
}

template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, int out_h, int out_w) {
  BasicTensor<T> out(x.n(), x.c(), out_h, out_w);
  const auto ty = resize_taps(x.h(), out_h);
  const auto tx = resize_taps(x.w(), out_w);
  const int planes = x.n() * x.c();

#pragma omp parallel for schedule(static) if (planes > 4)
  for (int p = 0; p < planes; ++p) {
    const T* s = x.data() + p * x.shape().plane();
    T* d = out.data() + p * out.shape().plane();
    for (int y = 0; y < out_h; ++y) {
      const T fy = static_cast<T>(ty[y].frac);
      const T* r0 = s + ty[y].i0 * x.w();
      const T* r1 = s + ty[y].i1 * x.w();
      for (int xo = 0; xo < out_w; ++xo) {
        const T fx = static_cast<T>(tx[xo].frac);
        const T top = (T(1) - fx) * r0[tx[xo].i0] + fx * r0[tx[xo].i1];
        const T bot = (T(1) - fx) * r1[tx[xo].i0] + fx * r1[tx[xo].i1];
        d[y * out_w + xo] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

/// Adjoint of resize_bilinear for an input of shape `in_shape`.
template <typename T>
BasicTensor<T> resize_bilinear_backward(const BasicTensor<T>& dy, const Shape& in_shape) {
  BasicTensor<T> dx(in_shape);
  const auto ty = resize_taps(in_shape.h, dy.h());
  const auto tx = resize_taps(in_shape.w, dy.w());
  const int planes = in_shape.n * in_shape.c;

#pragma omp parallel for schedule(static) if (planes > 4)
  for (int p = 0; p < planes; ++p) {
    const T* g = dy.data() + p * dy.shape().plane();
    T* d = dx.data() + p * in_shape.plane();
    for (int y = 0; y < dy.h(); ++y) {
      const T fy = static_cast<T>(ty[y].frac);
      T* r0 = d + ty[y].i0 * in_shape.w;
      T* r1 = d + ty[y].i1 * in_shape.w;
      for (int xo = 0; xo < dy.w(); ++xo) {
        const T fx = static_cast<T>(tx[xo].frac);
        const T v = g[y * dy.w() + xo];
        r0[tx[xo].i0] += (T(1) - fy) * (T(1) - fx) * v;
        r0[tx[xo].i1] += (T(1) - fy) * fx * v;
        r1[tx[xo].i0] += fy * (T(1) - fx) * v;
        r1[tx[xo].i1] += fy * fx * v;
      }
    }
  }
  return dx;
}

}  // namespace flowseg::kernels

#pragma once

// Backward bilinear warping: out(p) = src(p + flow(p)), zero outside the grid.

#include <cmath>
#include <stdexcept>

#include "flowseg/tensor.hpp"

namespace flowseg::kernels {

namespace detail {

template <typename T>
struct BilinearTap {
  int x0, y0;
  T ax, ay;
  bool in00, in10, in01, in11;
};

template <typename T>
inline BilinearTap<T> bilinear_tap(T sx, T sy, int h, int w) {
  const T fx = std::floor(sx);
  const T fy = std::floor(sy);
  BilinearTap<T> t{};
  t.x0 = static_cast<int>(fx);
  t.y0 = static_cast<int>(fy);
  t.ax = sx - fx;
  t.ay = sy - fy;
  const bool x0 = t.x0 >= 0 && t.x0 < w;
  const bool x1 = t.x0 + 1 >= 0 && t.x0 + 1 < w;
  const bool y0 = t.y0 >= 0 && t.y0 < h;
  const bool y1 = t.y0 + 1 >= 0 && t.y0 + 1 < h;
  t.in00 = x0 && y0;
  t.in10 = x1 && y0;
  t.in01 = x0 && y1;
  t.in11 = x1 && y1;
  return t;
}

// Sample locations far outside the grid are clamped before the int cast;
// every tap is out of range there anyway.
template <typename T>
inline T clamp_coord(T v, int extent) {
  const T lo = T(-4);
  const T hi = T(extent + 4);
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace detail

template <typename T>
void check_warp_args(const BasicTensor<T>& src, const BasicTensor<T>& flow) {
  if (flow.c() != 2 || flow.n() != src.n() || flow.h() != src.h() || flow.w() != src.w()) {
    throw std::invalid_argument("warp: flow " + flow.shape().str() +
                                " does not match source " + src.shape().str());
  }
}

template <typename T>
BasicTensor<T> warp_forward(const BasicTensor<T>& src, const BasicTensor<T>& flow) {
  check_warp_args(src, flow);
  const int n = src.n(), c = src.c(), h = src.h(), w = src.w();
  BasicTensor<T> out(src.shape());
  const int rows = n * h;

#pragma omp parallel for schedule(static) if (rows > 16)
  for (int r = 0; r < rows; ++r) {
    const int i = r / h;
    const int y = r % h;
    const T* u = flow.plane(i, 0) + y * w;
    const T* v = flow.plane(i, 1) + y * w;
    for (int x = 0; x < w; ++x) {
      const T sx = detail::clamp_coord(static_cast<T>(x) + u[x], w);
      const T sy = detail::clamp_coord(static_cast<T>(y) + v[x], h);
      const auto t = detail::bilinear_tap(sx, sy, h, w);
      const T w00 = (T(1) - t.ax) * (T(1) - t.ay);
      const T w10 = t.ax * (T(1) - t.ay);
      const T w01 = (T(1) - t.ax) * t.ay;
      const T w11 = t.ax * t.ay;
      for (int ch = 0; ch < c; ++ch) {
        const T* s = src.plane(i, ch);
        T acc = 0;
        if (t.in00) acc += w00 * s[t.y0 * w + t.x0];
        if (t.in10) acc += w10 * s[t.y0 * w + t.x0 + 1];
        if (t.in01) acc += w01 * s[(t.y0 + 1) * w + t.x0];
        if (t.in11) acc += w11 * s[(t.y0 + 1) * w + t.x0 + 1];
        out.plane(i, ch)[y * w + x] = acc;
      }
    }
  }
  return out;
}

/// Gradients of warp_forward. Either output pointer may be null.
template <typename T>
void warp_backward(const BasicTensor<T>& src, const BasicTensor<T>& flow,
                   const BasicTensor<T>& dout, BasicTensor<T>* dsrc, BasicTensor<T>* dflow) {
  check_warp_args(src, flow);
  require_same_shape(src, dout, "warp_backward");
  const int n = src.n(), c = src.c(), h = src.h(), w = src.w();

  if (dsrc != nullptr) {
    *dsrc = BasicTensor<T>(src.shape());
    const int planes = n * c;
    // One plane per task keeps the scatter race-free.
#pragma omp parallel for schedule(static) if (planes > 4)
    for (int pc = 0; pc < planes; ++pc) {
      const int i = pc / c;
      const int ch = pc % c;
      const T* g = dout.plane(i, ch);
      T* d = dsrc->plane(i, ch);
      for (int y = 0; y < h; ++y) {
        const T* u = flow.plane(i, 0) + y * w;
        const T* v = flow.plane(i, 1) + y * w;
        for (int x = 0; x < w; ++x) {
          const T sx = detail::clamp_coord(static_cast<T>(x) + u[x], w);
          const T sy = detail::clamp_coord(static_cast<T>(y) + v[x], h);
          const auto t = detail::bilinear_tap(sx, sy, h, w);
          const T gv = g[y * w + x];
          if (t.in00) d[t.y0 * w + t.x0] += (T(1) - t.ax) * (T(1) - t.ay) * gv;
          if (t.in10) d[t.y0 * w + t.x0 + 1] += t.ax * (T(1) - t.ay) * gv;
          if (t.in01) d[(t.y0 + 1) * w + t.x0] += (T(1) - t.ax) * t.ay * gv;
          if (t.in11) d[(t.y0 + 1) * w + t.x0 + 1] += t.ax * t.ay * gv;
        }
      }
    }
  }

  if (dflow != nullptr) {
    *dflow = BasicTensor<T>(flow.shape());
    const int rows = n * h;
#pragma omp parallel for schedule(static) if (rows > 16)
    for (int r = 0; r < rows; ++r) {
      const int i = r / h;
      const int y = r % h;
      const T* u = flow.plane(i, 0) + y * w;
      const T* v = flow.plane(i, 1) + y * w;
      T* du = dflow->plane(i, 0) + y * w;
      T* dv = dflow->plane(i, 1) + y * w;
      for (int x = 0; x < w; ++x) {
        const T rx = static_cast<T>(x) + u[x];
        const T ry = static_cast<T>(y) + v[x];
        const T sx = detail::clamp_coord(rx, w);
        const T sy = detail::clamp_coord(ry, h);
        // Clamped coordinates lie entirely in the zero padding: no gradient.
        if (sx != rx || sy != ry) continue;
        const auto t = detail::bilinear_tap(sx, sy, h, w);
        T gu = 0, gv = 0;
        for (int ch = 0; ch < c; ++ch) {
          const T* s = src.plane(i, ch);
          const T s00 = t.in00 ? s[t.y0 * w + t.x0] : T(0);
          const T s10 = t.in10 ? s[t.y0 * w + t.x0 + 1] : T(0);
          const T s01 = t.in01 ? s[(t.y0 + 1) * w + t.x0] : T(0);
          const T s11 = t.in11 ? s[(t.y0 + 1) * w + t.x0 + 1] : T(0);
          const T go = dout.plane(i, ch)[y * w + x];
          gu += go * ((T(1) - t.ay) * (s10 - s00) + t.ay * (s11 - s01));
          gv += go * ((T(1) - t.ax) * (s01 - s00) + t.ax * (s11 - s10));
        }
        du[x] = gu;
        dv[x] = gv;
      }
    }
  }
}

}  // namespace flowseg::kernels

#pragma once

#include <cmath>
#include <stdexcept>

#include "flowseg/kernels/resample.hpp"
#include "flowseg/kernels/warp.hpp"
#include "flowseg/networks/networks.hpp"
#include "flowseg/tensor.hpp"

namespace flowseg::propagation {

template <typename T>
void require_finite(const BasicTensor<T>& x, const char* what) {
  for (T v : x.span()) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite value");
  }
}

/// out(p) = src(p + flow(p)), bilinear, zero outside the grid.
template <typename T>
BasicTensor<T> warp_bilinear(const BasicTensor<T>& src, const BasicTensor<T>& flow) {
  kernels::check_warp_args(src, flow);
  require_finite(flow, "warp_bilinear flow");
  return kernels::warp_forward(src, flow);
}

template <typename T>
void warp_bilinear_backward(const BasicTensor<T>& src, const BasicTensor<T>& flow,
                            const BasicTensor<T>& dout, BasicTensor<T>* dsrc,
                            BasicTensor<T>* dflow) {
  kernels::warp_backward(src, flow, dout, dsrc, dflow);
}

/// Bilinear downsample to (H/factor, W/factor), values divided by factor.
template <typename T>
BasicTensor<T> downscale_flow(const BasicTensor<T>& flow, int factor) {
  if (factor < 1 || flow.h() % factor != 0 || flow.w() % factor != 0) {
    throw std::invalid_argument("downscale_flow: factor " + std::to_string(factor) +
                                " does not divide " + flow.shape().str());
  }
  if (flow.c() != 2) throw std::invalid_argument("downscale_flow: expects 2 channels");
  BasicTensor<T> out = kernels::resize_bilinear(flow, flow.h() / factor, flow.w() / factor);
  const T inv = T(1) / static_cast<T>(factor);
  for (T& v : out.span()) v *= inv;
  return out;
}

template <typename T>
BasicTensor<T> downscale_flow_backward(const BasicTensor<T>& dout, const Shape& flow_shape,
                                       int factor) {
  BasicTensor<T> g = kernels::resize_bilinear_backward(dout, flow_shape);
  const T inv = T(1) / static_cast<T>(factor);
  for (T& v : g.span()) v *= inv;
  return g;
}

/// Carried from frame to frame after a key frame.
struct PropagationState {
  Tensor prop_feature;
  Tensor prop_frame;
  /// The actual (unwarped) most recent frame, input to the next flow estimate.
  Tensor last_frame;
  int key_frame_index = 0;
  int distance = 0;
};

PropagationState start_at_key(const Tensor& key_frame, const Tensor& key_feature, int key_index);

/// Advances one frame with an externally supplied flow at image resolution.
PropagationState propagate_with_flow(const PropagationState& state, const Tensor& frame_next,
                                     const Tensor& flow, int feature_stride);

/// Estimates flow from the previous actual frame to `frame_next`, then warps
/// both the propagated frame and the propagated feature. The flow used is
/// returned through `flow_out` when non-null.
PropagationState propagate_step(const PropagationState& state, const Tensor& frame_next,
                                networks::FlowNet& flownet, int feature_stride,
                                Tensor* flow_out = nullptr);

}  // namespace flowseg::propagation

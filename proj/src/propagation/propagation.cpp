#include "flowseg/propagation/propagation.hpp"

namespace flowseg::propagation {

PropagationState start_at_key(const Tensor& key_frame, const Tensor& key_feature, int key_index) {
  PropagationState s;
  s.prop_feature = key_feature;
  s.prop_frame = key_frame;
  s.last_frame = key_frame;
  s.key_frame_index = key_index;
  s.distance = 0;
  return s;
}

PropagationState propagate_with_flow(const PropagationState& state, const Tensor& frame_next,
                                     const Tensor& flow, int feature_stride) {
  if (frame_next.shape() != state.prop_frame.shape()) {
    throw std::invalid_argument("propagate_step: frame " + frame_next.shape().str() +
                                " does not match state " + state.prop_frame.shape().str());
  }
  PropagationState next;
  next.prop_frame = warp_bilinear(state.prop_frame, flow);
  next.prop_feature = warp_bilinear(state.prop_feature, downscale_flow(flow, feature_stride));
  next.last_frame = frame_next;
  next.key_frame_index = state.key_frame_index;
  next.distance = state.distance + 1;
  return next;
}

PropagationState propagate_step(const PropagationState& state, const Tensor& frame_next,
                                networks::FlowNet& flownet, int feature_stride, Tensor* flow_out) {
  if (frame_next.shape() != state.last_frame.shape()) {
    throw std::invalid_argument("propagate_step: resolution mismatch");
  }
  Tensor flow = flownet.forward(state.last_frame, frame_next, networks::Mode::kEval, nullptr);
  PropagationState next = propagate_with_flow(state, frame_next, flow, feature_stride);
  if (flow_out != nullptr) *flow_out = std::move(flow);
  return next;
}

}  // namespace flowseg::propagation

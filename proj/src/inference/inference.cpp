#include "flowseg/inference/inference.hpp"

#include "flowseg/correction/correction.hpp"
#include "flowseg/distortion/distortion.hpp"
#include "flowseg/error.hpp"
#include "flowseg/propagation/propagation.hpp"
#include "flowseg/training/dds.hpp"

namespace flowseg::inference {

using networks::Mode;
using training::argmax_labels;

Schedule schedule_keyframes(int num_frames, int interval) {
  if (interval < 1) throw std::invalid_argument("schedule_keyframes: interval must be >= 1");
  if (num_frames < 0) throw std::invalid_argument("schedule_keyframes: negative frame count");
  Schedule s;
  s.interval = interval;
  s.key.resize(num_frames);
  for (int i = 0; i < num_frames; ++i) s.key[i] = i % interval == 0;
  return s;
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::kPredicted: return "predicted";
    case FusionMode::kPropagationOnly: return "propagation-only";
    case FusionMode::kNaive: return "naive";
    case FusionMode::kOracle: return "oracle";
  }
  return "?";
}

FusionMode fusion_mode_from_string(const std::string& s) {
  for (FusionMode m : {FusionMode::kPredicted, FusionMode::kPropagationOnly, FusionMode::kNaive,
                       FusionMode::kOracle}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown fusion mode '" + s + "' (predicted, propagation-only, naive, oracle)");
}

data::LabelMap segment_frame(const Tensor& frame, networks::Models& models) {
  const auto [feature, logits] = models.segnet.forward(frame, Mode::kEval);
  return argmax_labels(logits, 0, frame.h(), frame.w());
}

namespace {

Tensor oracle_map(const data::LabelMap& pred_low, const data::LabelMap& gt) {
  const data::LabelMap g = gt.resize_nearest(pred_low.height, pred_low.width);
  Tensor m(1, 1, pred_low.height, pred_low.width);
  for (std::size_t i = 0; i < g.size(); ++i) {
    m.data()[i] = !g.ignored(i) && g.values[i] != pred_low.values[i] ? 1.0f : 0.0f;
  }
  return m;
}

/// Frames [begin, end] of the clip; `is_key(t)` decides the path per frame
/// (the first frame must be a key).
template <typename KeyFn>
std::vector<FrameOutput> run(const data::VideoClip& clip, networks::Models& models, int begin,
                             int end, KeyFn is_key, const InferenceOptions& opt) {
  if (begin < 0 || end >= clip.size() || begin > end) {
    throw std::invalid_argument("segment: frame range outside the clip");
  }
  auto& head = models.segnet.head();
  const int H = clip.height(), W = clip.width();
  std::vector<FrameOutput> out;
  propagation::PropagationState state;
  for (int t = begin; t <= end; ++t) {
    const Tensor& frame = clip.frames[t];
    FrameOutput fo;
    fo.index = t;
    if (t == begin || is_key(t)) {
      const auto [feature, logits] = models.segnet.forward(frame, Mode::kEval);
      fo.key = true;
      fo.pred = argmax_labels(logits, 0, H, W);
      fo.pred_low = argmax_labels(logits, 0, logits.h(), logits.w());
      state = propagation::start_at_key(frame, feature, t);
      out.push_back(std::move(fo));
      continue;
    }

    state = propagation::propagate_step(state, frame, models.flownet, networks::kFeatureStride);
    fo.distance = state.distance;
    const Tensor logits_p = head.forward(state.prop_feature, nullptr);
    fo.pred_propagated = argmax_labels(logits_p, 0, H, W);
    fo.pred_propagated_low = argmax_labels(logits_p, 0, logits_p.h(), logits_p.w());

    Tensor m;
    switch (opt.mode) {
      case FusionMode::kPredicted:
        m = distortion::predict_distortion(state.prop_frame, frame, models.dmnet);
        break;
      case FusionMode::kPropagationOnly:
        m = Tensor(1, 1, logits_p.h(), logits_p.w(), 0.0f);
        break;
      case FusionMode::kNaive:
        m = Tensor(1, 1, logits_p.h(), logits_p.w(), 0.5f);
        break;
      case FusionMode::kOracle:
        if (!clip.has_label(t)) {
          throw DataError(clip.clip_id + ": oracle mode needs a label at frame " + std::to_string(t));
        }
        m = oracle_map(fo.pred_propagated_low, clip.labels.at(t));
        break;
    }

    Tensor f_c;
    if (opt.mode == FusionMode::kPropagationOnly) {
      f_c = state.prop_feature;
    } else {
      const Tensor f_cc = models.cfnet.forward(frame, Mode::kEval, nullptr);
      f_c = correction::fuse_features(state.prop_feature, f_cc, m);
      if (opt.emit_intermediates) fo.f_cc = f_cc;
    }
    const Tensor logits_c = head.forward(f_c, nullptr);
    fo.pred = argmax_labels(logits_c, 0, H, W);
    fo.pred_low = argmax_labels(logits_c, 0, logits_c.h(), logits_c.w());
    fo.distortion = std::move(m);
    if (opt.emit_intermediates) {
      fo.f_p = state.prop_feature;
      fo.f_c = f_c;
    }
    // The corrected feature is what propagates onward.
    state.prop_feature = std::move(f_c);
    out.push_back(std::move(fo));
  }
  return out;
}

}  // namespace

std::vector<FrameOutput> segment_clip(const data::VideoClip& clip, networks::Models& models,
                                      const Schedule& schedule, const InferenceOptions& options) {
  if (schedule.size() != clip.size()) {
    throw std::invalid_argument("segment_clip: schedule covers " + std::to_string(schedule.size()) +
                                " frames, clip has " + std::to_string(clip.size()));
  }
  if (clip.size() == 0) return {};
  return run(clip, models, 0, clip.size() - 1, [&](int t) { return schedule.key[t]; }, options);
}

std::vector<FrameOutput> segment_clip_oracle(const data::VideoClip& clip, networks::Models& models,
                                             const Schedule& schedule, bool emit_intermediates) {
  for (int t = 0; t < clip.size(); ++t) {
    if (t < schedule.size() && !schedule.key[t] && !clip.has_label(t)) {
      throw DataError(clip.clip_id + ": oracle mode needs a label at frame " + std::to_string(t));
    }
  }
  return segment_clip(clip, models, schedule, {FusionMode::kOracle, emit_intermediates});
}

std::vector<FrameOutput> segment_from_key(const data::VideoClip& clip, networks::Models& models,
                                          int key, int target, const InferenceOptions& options) {
  return run(clip, models, key, target, [](int) { return false; }, options);
}

}  // namespace flowseg::inference

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flowseg/data/types.hpp"
#include "flowseg/networks/models.hpp"

namespace flowseg::inference {

struct Schedule {
  int interval = 1;
  std::vector<bool> key;

  int size() const { return static_cast<int>(key.size()); }
  /// Frames since the most recent key frame.
  int distance(int t) const { return t % interval; }
  int max_distance() const { return interval - 1; }
};

/// key[i] iff i mod interval == 0.
Schedule schedule_keyframes(int num_frames, int interval);

/// Source of the distortion map used for fusion at non-key frames.
enum class FusionMode {
  /// DMNet prediction (the method).
  kPredicted,
  /// M = 0: the corrected feature is the propagated one.
  kPropagationOnly,
  /// M = 0.5 everywhere.
  kNaive,
  /// M = 1 where the propagated prediction disagrees with ground truth.
  kOracle,
};

std::string to_string(FusionMode m);
FusionMode fusion_mode_from_string(const std::string& s);

struct InferenceOptions {
  FusionMode mode = FusionMode::kPredicted;
  bool emit_intermediates = false;
};

struct FrameOutput {
  int index = 0;
  bool key = false;
  int distance = 0;
  /// Final prediction at label resolution.
  data::LabelMap pred;
  /// Same prediction at feature resolution.
  data::LabelMap pred_low;
  /// Non-key frames only: prediction from the propagated feature alone.
  data::LabelMap pred_propagated;
  data::LabelMap pred_propagated_low;
  /// Non-key frames only: the fusion map (1,1,h,w).
  Tensor distortion;
  /// With emit_intermediates: f^P, f^CC and f^C of non-key frames.
  Tensor f_p, f_cc, f_c;
};

/// Segments every frame of a clip under a schedule.
std::vector<FrameOutput> segment_clip(const data::VideoClip& clip, networks::Models& models,
                                      const Schedule& schedule, const InferenceOptions& options);

/// segment_clip with the ground-truth disagreement map; every non-key frame
/// must be labeled.
std::vector<FrameOutput> segment_clip_oracle(const data::VideoClip& clip, networks::Models& models,
                                             const Schedule& schedule, bool emit_intermediates = false);

/// Treats `key` as the key frame and propagates to `target`; returns the
/// outputs of frames key..target.
std::vector<FrameOutput> segment_from_key(const data::VideoClip& clip, networks::Models& models,
                                          int key, int target, const InferenceOptions& options);

/// Per-frame image segmentation (every frame a key frame).
data::LabelMap segment_frame(const Tensor& frame, networks::Models& models);

}  // namespace flowseg::inference

#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowseg/data/types.hpp"
#include "flowseg/evaluation/metrics.hpp"
#include "flowseg/inference/inference.hpp"
#include "flowseg/networks/models.hpp"

namespace flowseg::evaluation {

/// Per-network FLOPs reports at (h, w).
std::vector<networks::FlopsReport> network_flops(networks::Models& models, int h, int w);

/// C_seg: Net_seg with its head and logits upsampling. C_warp: FlowNet,
/// CFNet, two DMNet branches, the head and logits upsampling, plus the warp,
/// flow-rescaling, similarity and fusion arithmetic of a non-key frame.
CostModel build_cost_model(networks::Models& models, int h, int w);

struct PdaOptions {
  int d_min = 1;
  int d_max = 9;
  /// Evaluated frame; the key is target - d.
  int target_index = 19;
  int jobs = 1;
};

struct VariantRun {
  std::string label;
  inference::FusionMode mode = inference::FusionMode::kPredicted;
  std::map<int, ConfusionMatrix> by_distance;
  FalseCorrectionStats false_correction;
  /// Non-key feature-resolution pixels whose propagated prediction matched the
  /// ground truth but whose final prediction differs from it.
  std::int64_t flipped_correct = 0;
  std::int64_t checked_correct = 0;

  std::map<int, MiouResult> miou_by_distance() const;
  /// Mean over distances of the per-distance mIoU.
  double mean_miou() const;
};

/// Runs the key -> target protocol for every clip and every distance.
VariantRun run_pda(const std::vector<data::VideoClip>& clips, networks::Models& models,
                   inference::FusionMode mode, const PdaOptions& options, int num_classes);

/// Per-frame image segmentation over every labeled frame.
MiouResult per_frame_miou(const std::vector<data::VideoClip>& clips, networks::Models& models,
                          int num_classes, int jobs = 1);

struct DistortionAp {
  double ap = 0;
  /// Fraction of positive (distorted) positions.
  double prevalence = 0;
  std::int64_t positions = 0;
};

/// Scores DMNet's map against the disagreement between the segmentation of a
/// single long warp t -> t+k and of frame t+k itself, at feature resolution,
/// for k in [k_min, k_max] and every `t_stride`-th source frame.
DistortionAp distortion_ap(const std::vector<data::VideoClip>& clips, networks::Models& models,
                           int k_min, int k_max, int t_stride = 5);

}  // namespace flowseg::evaluation

#pragma once

#include <vector>

#include "flowseg/correction/correction.hpp"
#include "flowseg/data/types.hpp"
#include "flowseg/networks/models.hpp"
#include "flowseg/training/config.hpp"

namespace flowseg::training {

/// Losses of one supervised frame.
struct LossBundle {
  double l_p = 0;
  double l_c = 0;
  double l_dgfl = 0;
  double total = 0;
  bool present = false;
};

/// Mean of the three per-frame terms.
double frame_loss(double l_p, double l_c, double l_dgfl);
LossBundle make_bundle(double l_p, double l_c, double l_dgfl);

/// Unweighted cross-entropy on upsampled feature-resolution logits.
correction::Loss<float> propagation_loss(const Tensor& logits_p,
                                         const std::vector<const data::LabelMap*>& labels);
correction::Loss<float> correction_loss(const Tensor& logits_c,
                                        const std::vector<const data::LabelMap*>& labels);

/// Argmax of the upsampled segmentation logits at label resolution.
data::LabelMap pseudo_label(const Tensor& frame, networks::SegNet& segnet);
/// Argmax over classes of (1,K,h,w) logits, upsampled to (out_h, out_w) first
/// when those differ from the logits' size.
data::LabelMap argmax_labels(const Tensor& logits, int item, int out_h, int out_w);

/// One training sample with its precomputed frozen-network inputs.
struct DdsSample {
  const Tensor* f1 = nullptr;
  /// Null for a degenerate (distance 1) triplet or when DDS is disabled.
  const Tensor* f2 = nullptr;
  const Tensor* f3 = nullptr;
  /// Segmentation feature of f1 (frozen Net_seg).
  const Tensor* fs1 = nullptr;
  /// Pseudo label of f2 (frozen Net_seg); required when f2 is set.
  const data::LabelMap* pseudo2 = nullptr;
  const data::LabelMap* gt3 = nullptr;
};

struct DdsResult {
  LossBundle at_f2;
  LossBundle at_f3;
  /// Mean of the per-frame totals over the supervised frames.
  double total = 0;
};

/// Forward pass of the two-warp scheme over a batch. When `backward` is set,
/// gradients of `total` accumulate into FlowNet and CFNet parameters (the
/// frozen networks' gradients are left untouched by the optimizer).
DdsResult dds_step(networks::Models& models, const std::vector<DdsSample>& batch,
                   const Ablation& ablation, bool backward);

}  // namespace flowseg::training

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowseg/data/types.hpp"
#include "flowseg/networks/models.hpp"
#include "flowseg/training/config.hpp"

namespace flowseg::training {

/// Frozen Net_seg outputs for every frame of a clip set.
struct SegnetCache {
  /// features[clip][t]: (1,C_feat,h,w).
  std::vector<std::vector<Tensor>> features;
  /// Argmax at label resolution (pseudo labels).
  std::vector<std::vector<data::LabelMap>> pseudo;
  /// Argmax at feature resolution.
  std::vector<std::vector<data::LabelMap>> low;
};

SegnetCache build_segnet_cache(networks::SegNet& segnet, const std::vector<data::VideoClip>& clips);

struct StageReport {
  std::string stage;
  int steps = 0;
  double first_loss = 0;
  double final_loss = 0;
};

using LogFn = std::function<void(const std::string&)>;

/// Runs one stage: loads prerequisite checkpoints from `ckpt_in`, optimizes
/// the stage's networks on `train` and saves the stage checkpoint to
/// `ckpt_out`. Writes a per-step CSV log to `metrics_csv` when non-empty.
/// `annotated_index` is used when triplets target the annotated frame.
StageReport train_stage(networks::Stage stage, networks::Models& models,
                        const std::vector<data::VideoClip>& train, const TrainConfig& config,
                        const std::filesystem::path& ckpt_in, const std::filesystem::path& ckpt_out,
                        const std::filesystem::path& metrics_csv, const LogFn& log = {},
                        int annotated_index = -1);

/// Throws PrerequisiteError unless every checkpoint `stage` depends on exists.
void check_prerequisites(networks::Stage stage, const std::filesystem::path& ckpt_in);

/// Mean endpoint error and its gradient with respect to `flow`.
double endpoint_error(const Tensor& flow, const Tensor& target, Tensor* grad);

}  // namespace flowseg::training

#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "flowseg/data/sampling.hpp"

namespace flowseg::training {

/// Optimization schedule of one stage. Epochs at index >= lr_drop_epoch use lr / 10.
struct StageConfig {
  int epochs = 40;
  int lr_drop_epoch = 20;
  float lr = 1e-4f;
  int batch_size = 8;
  /// Samples drawn per epoch; 0 means one per training clip.
  int samples_per_epoch = 0;
  /// Random horizontal flips (segnet stage only).
  bool hflip = false;

  float lr_at(int epoch) const { return epoch < lr_drop_epoch ? lr : lr * 0.1f; }
  void validate(const std::string& stage) const;
  nlohmann::json to_json() const;
  static StageConfig from_json(const nlohmann::json& j, const std::string& stage,
                               StageConfig defaults);
};

/// Component switches; all enabled is the full method.
struct Ablation {
  bool dds = true;
  bool dgfl = true;
  bool dgfc = true;

  /// "full", "no-dds", "no-dgfl", "no-dgfc" or a '+'-joined combination.
  std::string name() const;
  static Ablation parse(const std::string& s);
};

struct TrainConfig {
  std::uint64_t seed = 1;
  StageConfig segnet;
  StageConfig flow_pretrain;
  StageConfig dmnet;
  StageConfig joint;
  data::TripletTarget triplet_target = data::TripletTarget::kAnyLabeled;
  int dmnet_k_min = 1;
  int dmnet_k_max = data::kMaxTripletDistance;
  /// Fraction of flow-pretraining pairs that repeat one frame (target: zero flow).
  double static_pair_fraction = 0.1;
  Ablation ablation;

  static TrainConfig desk_defaults();
  const StageConfig& stage(const std::string& name) const;
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

}  // namespace flowseg::training

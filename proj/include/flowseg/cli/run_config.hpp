#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "flowseg/data/synth.hpp"
#include "flowseg/networks/networks.hpp"
#include "flowseg/training/config.hpp"

namespace flowseg::cli {

/// Everything a run needs. Unknown keys anywhere are a ConfigError.
///
///   {
///     "seed": 7,
///     "dataset": "data/synth",
///     "output": "runs/default",
///     "jobs": 1,
///     "synth": {...},
///     "networks": {...},
///     "training": {...},
///     "inference": {"interval": 10, "split": "val"},
///     "evaluation": {"distances": [1, 9], "split": "val", "target_index": -1}
///   }
///
/// Sub-seeds (synth.seed, networks.init_seed, training.seed) default to the
/// top-level seed; `--seed` overrides all of them.
struct RunConfig {
  RunConfig() { set_seed(seed); }

  std::uint64_t seed = 7;
  std::filesystem::path dataset = "data/synth";
  std::filesystem::path output = "runs/default";
  int jobs = 1;
  data::SynthSpec synth;
  networks::NetworkConfig networks;
  training::TrainConfig training = training::TrainConfig::desk_defaults();
  int interval = 10;
  std::string infer_split = "val";
  int d_min = 1;
  int d_max = 9;
  std::string eval_split = "val";
  /// Evaluated frame index; -1 uses the manifest's annotated frame.
  int eval_target = -1;

  void set_seed(std::uint64_t s);
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

/// Writes `<dir>/config.json`.
void write_effective_config(const std::filesystem::path& dir, const RunConfig& cfg);

}  // namespace flowseg::cli

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowseg/networks/networks.hpp"

namespace flowseg::networks {

/// Training stages in dependency order.
enum class Stage { kSegnet, kFlowPretrain, kDmnet, kJoint };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);
const std::vector<Stage>& all_stages();
/// Checkpoints a stage needs before it can run.
std::vector<Stage> stage_prerequisites(Stage s);

/// Every network of the method, built from one config.
struct Models {
  explicit Models(const NetworkConfig& cfg);

  NetworkConfig cfg;
  SegNet segnet;
  FlowNet flownet;
  DMNet dmnet;
  CFNet cfnet;

  /// Parameters (and buffers) a stage's checkpoint stores.
  ParamSet stage_params(Stage s);
};

struct CheckpointManifest {
  std::string stage;
  std::uint64_t seed = 0;
  std::string config_hash;
  int epoch = 0;
  nlohmann::json shapes;
  nlohmann::json extra;

  nlohmann::json to_json() const;
  static CheckpointManifest from_json(const nlohmann::json& j);
};

std::filesystem::path checkpoint_params_path(const std::filesystem::path& dir, Stage s);
std::filesystem::path checkpoint_manifest_path(const std::filesystem::path& dir, Stage s);
bool checkpoint_exists(const std::filesystem::path& dir, Stage s);

void save_checkpoint(const std::filesystem::path& dir, Stage s, Models& models,
                     CheckpointManifest manifest);
/// Throws PrerequisiteError when absent and ConfigError when the manifest's
/// config hash differs from the models' config.
CheckpointManifest load_checkpoint(const std::filesystem::path& dir, Stage s, Models& models);

/// Loads the three checkpoints inference needs (segnet, dmnet, joint).
void load_inference_checkpoints(const std::filesystem::path& dir, Models& models);

}  // namespace flowseg::networks

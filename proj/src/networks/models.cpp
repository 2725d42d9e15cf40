#include "flowseg/networks/models.hpp"

#include <fstream>

#include "flowseg/error.hpp"
#include "flowseg/nn/optim.hpp"

namespace fs = std::filesystem;

namespace flowseg::networks {

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kSegnet: return "segnet";
    case Stage::kFlowPretrain: return "flow-pretrain";
    case Stage::kDmnet: return "dmnet";
    case Stage::kJoint: return "joint";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (Stage st : all_stages()) {
    if (to_string(st) == s) return st;
  }
  throw ConfigError("unknown stage '" + s + "' (segnet, flow-pretrain, dmnet, joint)");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> v{Stage::kSegnet, Stage::kFlowPretrain, Stage::kDmnet,
                                    Stage::kJoint};
  return v;
}

std::vector<Stage> stage_prerequisites(Stage s) {
  switch (s) {
    case Stage::kSegnet: return {};
    case Stage::kFlowPretrain: return {Stage::kSegnet};
    case Stage::kDmnet: return {Stage::kSegnet, Stage::kFlowPretrain};
    case Stage::kJoint: return {Stage::kSegnet, Stage::kFlowPretrain, Stage::kDmnet};
  }
  return {};
}

namespace {

template <typename Net>
Net build(const NetworkConfig& cfg, std::uint64_t salt) {
  nn::Rng rng(cfg.init_seed * 0x9E3779B97F4A7C15ULL + salt);
  return Net(cfg, rng);
}

}  // namespace

Models::Models(const NetworkConfig& c)
    : cfg((c.validate(), c)),
      segnet(build<SegNet>(cfg, 1)),
      flownet(build<FlowNet>(cfg, 2)),
      dmnet(build<DMNet>(cfg, 3)),
      cfnet(build<CFNet>(cfg, 4)) {}

ParamSet Models::stage_params(Stage s) {
  ParamSet set;
  switch (s) {
    case Stage::kSegnet: segnet.collect(set); break;
    case Stage::kFlowPretrain: flownet.collect(set); break;
    case Stage::kDmnet: dmnet.collect(set); break;
    case Stage::kJoint:
      flownet.collect(set);
      cfnet.collect(set);
      break;
  }
  return set;
}

nlohmann::json CheckpointManifest::to_json() const {
  nlohmann::json j{{"stage", stage},
                   {"seed", seed},
                   {"config_hash", config_hash},
                   {"epoch", epoch},
                   {"shapes", shapes}};
  if (!extra.is_null()) j["extra"] = extra;
  return j;
}

CheckpointManifest CheckpointManifest::from_json(const nlohmann::json& j) {
  CheckpointManifest m;
  try {
    m.stage = j.at("stage").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.epoch = j.at("epoch").get<int>();
    m.shapes = j.at("shapes");
    if (j.contains("extra")) m.extra = j.at("extra");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint manifest: ") + e.what());
  }
  return m;
}

fs::path checkpoint_params_path(const fs::path& dir, Stage s) {
  return dir / (to_string(s) + ".params");
}

fs::path checkpoint_manifest_path(const fs::path& dir, Stage s) {
  return dir / (to_string(s) + ".json");
}

bool checkpoint_exists(const fs::path& dir, Stage s) {
  return fs::exists(checkpoint_params_path(dir, s)) && fs::exists(checkpoint_manifest_path(dir, s));
}

void save_checkpoint(const fs::path& dir, Stage s, Models& models, CheckpointManifest manifest) {
  fs::create_directories(dir);
  ParamSet set = models.stage_params(s);
  manifest.stage = to_string(s);
  manifest.config_hash = models.cfg.hash();
  manifest.shapes = nlohmann::json::object();
  for (const auto* p : set.all()) {
    const Shape& sh = p->value.shape();
    manifest.shapes[p->name] = {sh.n, sh.c, sh.h, sh.w};
  }
  nn::save_params(checkpoint_params_path(dir, s), set.all());
  std::ofstream f(checkpoint_manifest_path(dir, s));
  if (!f) throw std::runtime_error("cannot write " + checkpoint_manifest_path(dir, s).string());
  f << manifest.to_json().dump(2) << '\n';
}

CheckpointManifest load_checkpoint(const fs::path& dir, Stage s, Models& models) {
  if (!checkpoint_exists(dir, s)) {
    throw PrerequisiteError("missing '" + to_string(s) + "' checkpoint in " + dir.string() +
                            " (run `train " + to_string(s) + "` first)");
  }
  std::ifstream f(checkpoint_manifest_path(dir, s));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(checkpoint_manifest_path(dir, s).string() + ": " + e.what());
  }
  CheckpointManifest m = CheckpointManifest::from_json(j);
  if (m.config_hash != models.cfg.hash()) {
    throw ConfigError("checkpoint '" + to_string(s) + "' was trained with network config " +
                      m.config_hash + ", current config is " + models.cfg.hash());
  }
  ParamSet set = models.stage_params(s);
  nn::load_params(checkpoint_params_path(dir, s), set.all());
  return m;
}

void load_inference_checkpoints(const fs::path& dir, Models& models) {
  load_checkpoint(dir, Stage::kSegnet, models);
  load_checkpoint(dir, Stage::kDmnet, models);
  load_checkpoint(dir, Stage::kJoint, models);
}

}  // namespace flowseg::networks

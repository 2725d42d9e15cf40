#include "flowseg/training/config.hpp"

#include "flowseg/error.hpp"

namespace flowseg::training {

void StageConfig::validate(const std::string& stage) const {
  const std::string p = "training." + stage + ".";
  if (epochs < 1) throw ConfigError(p + "epochs must be positive");
  if (lr_drop_epoch < 1) throw ConfigError(p + "lr_drop_epoch must be positive");
  if (!(lr > 0)) throw ConfigError(p + "lr must be positive");
  if (batch_size < 1) throw ConfigError(p + "batch_size must be positive");
  if (samples_per_epoch < 0) throw ConfigError(p + "samples_per_epoch must be >= 0");
}

nlohmann::json StageConfig::to_json() const {
  return {{"epochs", epochs},         {"lr_drop_epoch", lr_drop_epoch},
          {"lr", lr},                 {"batch_size", batch_size},
          {"samples_per_epoch", samples_per_epoch}, {"hflip", hflip}};
}

StageConfig StageConfig::from_json(const nlohmann::json& j, const std::string& stage,
                                   StageConfig c) {
  if (!j.is_object()) throw ConfigError("training." + stage + " must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "lr_drop_epoch") c.lr_drop_epoch = v.get<int>();
    else if (key == "lr") c.lr = v.get<float>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "samples_per_epoch") c.samples_per_epoch = v.get<int>();
    else if (key == "hflip") c.hflip = v.get<bool>();
    else throw ConfigError("unknown key training." + stage + "." + key);
  }
  c.validate(stage);
  return c;
}

std::string Ablation::name() const {
  std::string s;
  auto add = [&](bool on, const char* n) {
    if (on) return;
    if (!s.empty()) s += "+";
    s += n;
  };
  add(dds, "no-dds");
  add(dgfl, "no-dgfl");
  add(dgfc, "no-dgfc");
  return s.empty() ? "full" : s;
}

Ablation Ablation::parse(const std::string& text) {
  Ablation a;
  if (text.empty() || text == "full") return a;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('+', start), text.size());
    const std::string part = text.substr(start, end - start);
    if (part == "no-dds") a.dds = false;
    else if (part == "no-dgfl") a.dgfl = false;
    else if (part == "no-dgfc") a.dgfc = false;
    else throw ConfigError("unknown ablation '" + part + "' (no-dds, no-dgfl, no-dgfc)");
    start = end + 1;
  }
  return a;
}

TrainConfig TrainConfig::desk_defaults() {
  TrainConfig c;
  c.segnet = {40, 20, 2e-3f, 8, 320, true};
  c.flow_pretrain = {40, 20, 3e-3f, 8, 640, false};
  c.dmnet = {40, 20, 1e-3f, 8, 160, false};
  c.joint = {40, 20, 1e-3f, 8, 160, false};
  return c;
}

const StageConfig& TrainConfig::stage(const std::string& name) const {
  if (name == "segnet") return segnet;
  if (name == "flow-pretrain") return flow_pretrain;
  if (name == "dmnet") return dmnet;
  if (name == "joint") return joint;
  throw ConfigError("unknown stage '" + name + "'");
}

void TrainConfig::validate() const {
  segnet.validate("segnet");
  flow_pretrain.validate("flow-pretrain");
  dmnet.validate("dmnet");
  joint.validate("joint");
  if (dmnet_k_min < 1 || dmnet_k_max < dmnet_k_min) {
    throw ConfigError("training.dmnet_k_range must satisfy 1 <= min <= max");
  }
  if (static_pair_fraction < 0 || static_pair_fraction > 1) {
    throw ConfigError("training.static_pair_fraction must lie in [0, 1]");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"seed", seed},
          {"segnet", segnet.to_json()},
          {"flow-pretrain", flow_pretrain.to_json()},
          {"dmnet", dmnet.to_json()},
          {"joint", joint.to_json()},
          {"triplet_target",
           triplet_target == data::TripletTarget::kAnnotated ? "annotated" : "any-labeled"},
          {"dmnet_k_range", {dmnet_k_min, dmnet_k_max}},
          {"static_pair_fraction", static_pair_fraction},
          {"ablation", ablation.name()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c = desk_defaults();
  if (!j.is_object()) throw ConfigError("training must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "segnet") c.segnet = StageConfig::from_json(v, key, c.segnet);
      else if (key == "flow-pretrain") c.flow_pretrain = StageConfig::from_json(v, key, c.flow_pretrain);
      else if (key == "dmnet") c.dmnet = StageConfig::from_json(v, key, c.dmnet);
      else if (key == "joint") c.joint = StageConfig::from_json(v, key, c.joint);
      else if (key == "triplet_target") {
        const auto s = v.get<std::string>();
        if (s == "annotated") c.triplet_target = data::TripletTarget::kAnnotated;
        else if (s == "any-labeled") c.triplet_target = data::TripletTarget::kAnyLabeled;
        else throw ConfigError("training.triplet_target must be 'annotated' or 'any-labeled'");
      } else if (key == "dmnet_k_range") {
        const auto r = v.get<std::vector<int>>();
        if (r.size() != 2) throw ConfigError("training.dmnet_k_range needs two values");
        c.dmnet_k_min = r[0];
        c.dmnet_k_max = r[1];
      } else if (key == "static_pair_fraction") c.static_pair_fraction = v.get<double>();
      else if (key == "ablation") c.ablation = Ablation::parse(v.get<std::string>());
      else throw ConfigError("unknown key training." + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace flowseg::training

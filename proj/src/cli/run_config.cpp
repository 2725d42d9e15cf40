#include "flowseg/cli/run_config.hpp"

#include <fstream>

#include "flowseg/error.hpp"

namespace fs = std::filesystem;

namespace flowseg::cli {

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  synth.seed = s;
  networks.init_seed = s;
  training.seed = s;
}

void RunConfig::validate() const {
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  synth.validate();
  networks.validate();
  training.validate();
  if (interval < 1) throw ConfigError("inference.interval must be >= 1");
  if (d_min < 1 || d_max < d_min) throw ConfigError("evaluation.distances must satisfy 1 <= min <= max");
  if (d_max > data::kMaxTripletDistance) {
    throw ConfigError("evaluation.distances max exceeds " + std::to_string(data::kMaxTripletDistance));
  }
  if (dataset.empty()) throw ConfigError("dataset path is empty");
  if (output.empty()) throw ConfigError("output path is empty");
}

nlohmann::json RunConfig::to_json() const {
  return {{"seed", seed},
          {"dataset", dataset.string()},
          {"output", output.string()},
          {"jobs", jobs},
          {"synth", synth.to_json()},
          {"networks", networks.to_json()},
          {"training", training.to_json()},
          {"inference", {{"interval", interval}, {"split", infer_split}}},
          {"evaluation",
           {{"distances", {d_min, d_max}}, {"split", eval_split}, {"target_index", eval_target}}}};
}

namespace {

template <typename F>
void each_key(const nlohmann::json& j, const std::string& where, F&& f) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, v] : j.items()) f(key, v);
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config: expected an object");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.set_seed(c.seed);
    each_key(j, "config", [&](const std::string& key, const nlohmann::json& v) {
      if (key == "seed") return;
      if (key == "dataset") c.dataset = v.get<std::string>();
      else if (key == "output") c.output = v.get<std::string>();
      else if (key == "jobs") c.jobs = v.get<int>();
      else if (key == "synth") {
        auto sj = v;
        if (sj.is_object() && !sj.contains("seed")) sj["seed"] = c.seed;
        c.synth = data::SynthSpec::from_json(sj);
      } else if (key == "networks") {
        auto nj = v;
        if (nj.is_object() && !nj.contains("init_seed")) nj["init_seed"] = c.seed;
        c.networks = networks::NetworkConfig::from_json(nj);
      } else if (key == "training") {
        auto tj = v;
        if (tj.is_object() && !tj.contains("seed")) tj["seed"] = c.seed;
        c.training = training::TrainConfig::from_json(tj);
      } else if (key == "inference") {
        each_key(v, "inference", [&](const std::string& k, const nlohmann::json& x) {
          if (k == "interval") c.interval = x.get<int>();
          else if (k == "split") c.infer_split = x.get<std::string>();
          else throw ConfigError("unknown key inference." + k);
        });
      } else if (key == "evaluation") {
        each_key(v, "evaluation", [&](const std::string& k, const nlohmann::json& x) {
          if (k == "distances") {
            const auto r = x.get<std::vector<int>>();
            if (r.size() != 2) throw ConfigError("evaluation.distances needs [min, max]");
            c.d_min = r[0];
            c.d_max = r[1];
          } else if (k == "split") c.eval_split = x.get<std::string>();
          else if (k == "target_index") c.eval_target = x.get<int>();
          else throw ConfigError("unknown key evaluation." + k);
        });
      } else {
        throw ConfigError("unknown key " + key);
      }
    });
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void write_effective_config(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  std::ofstream f(dir / "config.json");
  if (!f) throw std::runtime_error("cannot write " + (dir / "config.json").string());
  f << cfg.to_json().dump(2) << "\n";
}

}  // namespace flowseg::cli

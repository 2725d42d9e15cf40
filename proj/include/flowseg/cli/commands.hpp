#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowseg/cli/run_config.hpp"
#include "flowseg/networks/models.hpp"
#include "flowseg/training/trainer.hpp"

namespace flowseg::cli {

// Output layout under RunConfig::output:
//   checkpoints/<stage>.{params,json}          full method
//   checkpoints/<ablation>/joint.{params,json}  ablated joint stages
//   metrics/<stage>[-<ablation>].csv
//   infer/clips/<clip_id>/pred/%06d.png (+ debug/)
//   eval/[<ablation>/]{pda,cca,false_correction,upper_bound}.csv, flops.json, *.svg

using LogFn = training::LogFn;

std::filesystem::path checkpoint_dir(const RunConfig& cfg, const training::Ablation& ablation);
std::filesystem::path eval_dir(const RunConfig& cfg, const training::Ablation& ablation);

void cmd_synth(const RunConfig& cfg, bool force, const LogFn& log = {});

/// Ablations only change the joint stage; they are rejected for other stages.
training::StageReport cmd_train(const RunConfig& cfg, networks::Stage stage,
                                const training::Ablation& ablation, const LogFn& log = {});

struct InferRequest {
  std::optional<int> interval;
  bool oracle = false;
  bool dump_intermediates = false;
  /// Empty selects every clip of the configured split.
  std::vector<std::string> clips;
  training::Ablation ablation;
};

void cmd_infer(const RunConfig& cfg, const InferRequest& req, const LogFn& log = {});

/// kind: pda, cca, false-correction, flops or upper-bound. Returns a summary.
nlohmann::json cmd_eval(const RunConfig& cfg, const std::string& kind,
                        const training::Ablation& ablation, const LogFn& log = {});

/// Regenerates SVG charts from the CSVs of an evaluation directory.
void cmd_plot(const RunConfig& cfg, const training::Ablation& ablation);

/// Builds the models and loads segnet and dmnet from the base checkpoints and
/// joint from the ablation's directory.
void load_for_inference(const RunConfig& cfg, const training::Ablation& ablation,
                        networks::Models& models);

}  // namespace flowseg::cli

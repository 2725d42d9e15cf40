#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "flowseg/cli/commands.hpp"
#include "flowseg/error.hpp"

using namespace flowseg;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPrerequisite = 3;
constexpr int kExitData = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distortion-aware video segmentation: data, training, inference, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> jobs;
  bool force = false;
  std::string ablate = "full";
  app.add_option("--config", config_path, "JSON run config");
  app.add_option("--seed", seed, "Seed for every random stream of the run");
  std::string dataset_override;
  app.add_option("--out", out, "Output root (overrides config)");
  app.add_option("--dataset", dataset_override, "Dataset root (overrides config)");
  app.add_option("--jobs", jobs, "Maximum concurrent clips")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
  synth->add_flag("--force", force, "Replace an existing dataset");

  auto* train = app.add_subcommand("train", "Train one stage");
  std::string stage_name;
  train->add_option("stage", stage_name, "segnet, flow-pretrain, dmnet or joint")->required();
  train->add_option("--ablate", ablate, "no-dds, no-dgfl, no-dgfc or a '+'-joined combination");

  auto* infer = app.add_subcommand("infer", "Segment clips and write predictions");
  std::optional<int> interval;
  bool oracle = false, dump = false;
  std::vector<std::string> clips;
  infer->add_option("--interval", interval, "Key-frame interval")->check(CLI::PositiveNumber);
  infer->add_flag("--oracle", oracle, "Use the ground-truth disagreement map (needs labels)");
  infer->add_flag("--dump-intermediates", dump, "Write distortion maps and feature argmax PNGs");
  infer->add_option("--clip", clips, "Clip ids (default: the configured split)");
  infer->add_option("--ablate", ablate, "Use an ablated joint checkpoint");

  auto* eval = app.add_subcommand("eval", "Compute evaluation reports");
  std::string kind;
  eval->add_option("kind", kind, "pda, cca, false-correction, flops or upper-bound")
      ->required()
      ->check(CLI::IsMember({"pda", "cca", "false-correction", "flops", "upper-bound"}));
  eval->add_option("--ablate", ablate, "Evaluate an ablated joint checkpoint");

  auto* plot = app.add_subcommand("plot", "Render SVG charts from evaluation CSVs");
  plot->add_option("--ablate", ablate, "Ablation whose reports to plot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  auto log = [](const std::string& s) { std::cerr << s << '\n'; };
  try {
    cli::RunConfig cfg;
    if (!config_path.empty()) cfg = cli::RunConfig::load(config_path);
    if (seed) cfg.set_seed(*seed);
    if (!out.empty()) cfg.output = out;
    if (!dataset_override.empty()) cfg.dataset = dataset_override;
    if (jobs) cfg.jobs = *jobs;
    cfg.validate();
    const auto ablation = training::Ablation::parse(ablate);

    if (*synth) {
      cli::cmd_synth(cfg, force, log);
    } else if (*train) {
      const auto r = cli::cmd_train(cfg, networks::stage_from_string(stage_name), ablation, log);
      std::cout << r.stage << ": " << r.steps << " steps, loss " << r.first_loss << " -> "
                << r.final_loss << '\n';
    } else if (*infer) {
      cli::cmd_infer(cfg, {interval, oracle, dump, clips, ablation}, log);
    } else if (*eval) {
      std::cout << cli::cmd_eval(cfg, kind, ablation, log).dump(2) << '\n';
    } else if (*plot) {
      cli::cmd_plot(cfg, ablation);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PrerequisiteError& e) {
    std::cerr << "missing prerequisite: " << e.what() << '\n';
    return kExitPrerequisite;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

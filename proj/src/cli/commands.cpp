#include "flowseg/cli/commands.hpp"

#include <fstream>
#include <sstream>

#include "flowseg/data/io.hpp"
#include "flowseg/data/synth.hpp"
#include "flowseg/error.hpp"
#include "flowseg/evaluation/metrics.hpp"
#include "flowseg/evaluation/runner.hpp"
#include "flowseg/inference/inference.hpp"

namespace fs = std::filesystem;

namespace flowseg::cli {

using inference::FusionMode;
using networks::Stage;
using training::Ablation;

namespace {

void say(const LogFn& log, const std::string& s) {
  if (log) log(s);
}

std::string ablation_suffix(const Ablation& a) {
  return a.name() == "full" ? std::string() : "-" + a.name();
}

data::Manifest load_manifest(const RunConfig& cfg) {
  auto m = data::Manifest::load(cfg.dataset);
  if (m.num_classes != cfg.networks.num_classes) {
    throw ConfigError("dataset has " + std::to_string(m.num_classes) + " classes, networks.num_classes is " +
                      std::to_string(cfg.networks.num_classes));
  }
  return m;
}

std::vector<data::VideoClip> load_split_checked(const RunConfig& cfg, const data::Manifest& m,
                                                const std::string& split) {
  auto clips = data::load_split(cfg.dataset, m, split, cfg.jobs);
  if (clips.empty()) throw DataError("split '" + split + "' has no clips in " + cfg.dataset.string());
  return clips;
}

/// Fusion mode that realises the trained configuration at inference.
FusionMode method_mode(const Ablation& a) { return a.dgfc ? FusionMode::kPredicted : FusionMode::kNaive; }

int eval_target(const RunConfig& cfg, const data::Manifest& m) {
  const int t = cfg.eval_target >= 0 ? cfg.eval_target : m.annotated_index;
  if (t < 0) throw ConfigError("no evaluation target: set evaluation.target_index");
  return t;
}

evaluation::CurveSeries curve_of(const evaluation::VariantRun& run, const std::string& label,
                                 const RunConfig& cfg) {
  return evaluation::pda_curve(label, run.miou_by_distance(), cfg.d_min, cfg.d_max);
}

/// Reads a pda CSV back into per-distance results.
std::map<int, evaluation::MiouResult> read_pda_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw PrerequisiteError("missing " + path.string() + " (run `eval pda` first)");
  std::map<int, evaluation::MiouResult> out;
  std::string line;
  std::getline(f, line);
  if (line.rfind("distance,miou", 0) != 0) throw DataError(path.string() + ": unexpected header");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() < 2) throw DataError(path.string() + ": malformed row '" + line + "'");
    try {
      evaluation::MiouResult r;
      r.mean = std::stod(cells[1]);
      for (std::size_t i = 2; i < cells.size(); ++i) {
        r.per_class.push_back(cells[i].empty() ? std::nan("") : std::stod(cells[i]));
      }
      out[std::stoi(cells[0])] = r;
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ": malformed row '" + line + "'");
    }
  }
  return out;
}

std::vector<evaluation::ChartSeries> pda_series_in(const fs::path& dir) {
  std::vector<evaluation::ChartSeries> series;
  auto add = [&](const fs::path& p, const std::string& label) {
    if (!fs::exists(p)) return;
    evaluation::ChartSeries s;
    s.label = label;
    for (const auto& [d, r] : read_pda_csv(p)) s.points.push_back({static_cast<double>(d), r.mean});
    series.push_back(std::move(s));
  };
  add(dir / "pda.csv", "method");
  for (const char* m : {"propagation-only", "naive", "oracle"}) {
    add(dir / ("pda_" + std::string(m) + ".csv"), m);
  }
  return series;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << s;
}

}  // namespace

fs::path checkpoint_dir(const RunConfig& cfg, const Ablation& a) {
  const fs::path base = cfg.output / "checkpoints";
  return a.name() == "full" ? base : base / a.name();
}

fs::path eval_dir(const RunConfig& cfg, const Ablation& a) {
  const fs::path base = cfg.output / "eval";
  return a.name() == "full" ? base : base / a.name();
}

// ---------------------------------------------------------------- synth

void cmd_synth(const RunConfig& cfg, bool force, const LogFn& log) {
  data::generate_synthetic_dataset(cfg.synth, cfg.dataset, force, cfg.jobs);
  write_effective_config(cfg.dataset / "run", cfg);
  say(log, "wrote " + std::to_string(cfg.synth.num_clips) + " clips to " + cfg.dataset.string());
}

// ---------------------------------------------------------------- train

training::StageReport cmd_train(const RunConfig& cfg, Stage stage, const Ablation& ablation,
                                const LogFn& log) {
  if (stage != Stage::kJoint && ablation.name() != "full") {
    throw ConfigError("ablations apply to the joint stage only");
  }
  const fs::path ckpt_in = checkpoint_dir(cfg, {});
  const fs::path ckpt_out = checkpoint_dir(cfg, ablation);
  training::check_prerequisites(stage, ckpt_in);

  const auto manifest = load_manifest(cfg);
  const auto train = load_split_checked(cfg, manifest, "train");
  training::TrainConfig tc = cfg.training;
  tc.ablation = ablation;

  networks::Models models(cfg.networks);
  const fs::path metrics = cfg.output / "metrics" /
                           (networks::to_string(stage) + ablation_suffix(ablation) + ".csv");
  fs::create_directories(metrics.parent_path());
  RunConfig effective = cfg;
  effective.training = tc;
  write_effective_config(metrics.parent_path(), effective);
  write_effective_config(ckpt_out, effective);
  auto report = training::train_stage(stage, models, train, tc, ckpt_in, ckpt_out, metrics, log,
                                      manifest.annotated_index);
  if (stage == Stage::kSegnet && !manifest.split("val").empty()) {
    const auto val = load_split_checked(cfg, manifest, "val");
    const auto r = evaluation::per_frame_miou(val, models, manifest.num_classes, cfg.jobs);
    evaluation::write_json(metrics.parent_path() / "segnet_val.json",
                           {{"miou", r.mean}, {"per_class", r.per_class}});
    say(log, "segnet per-frame val mIoU " + std::to_string(r.mean));
  }
  if (stage == Stage::kDmnet && !manifest.split("val").empty()) {
    const auto val = load_split_checked(cfg, manifest, "val");
    const auto r = evaluation::distortion_ap(val, models, tc.dmnet_k_min, tc.dmnet_k_max);
    evaluation::write_json(metrics.parent_path() / "dmnet_val.json",
                           {{"average_precision", r.ap}, {"prevalence", r.prevalence}, {"positions", r.positions}});
    say(log, "dmnet val AP " + std::to_string(r.ap) + " (prevalence " + std::to_string(r.prevalence) + ")");
  }
  return report;
}

void load_for_inference(const RunConfig& cfg, const Ablation& ablation, networks::Models& models) {
  const fs::path base = checkpoint_dir(cfg, {});
  networks::load_checkpoint(base, Stage::kSegnet, models);
  networks::load_checkpoint(base, Stage::kDmnet, models);
  networks::load_checkpoint(checkpoint_dir(cfg, ablation), Stage::kJoint, models);
}

// ---------------------------------------------------------------- infer

void cmd_infer(const RunConfig& cfg, const InferRequest& req, const LogFn& log) {
  const int interval = req.interval.value_or(cfg.interval);
  if (interval < 1) throw ConfigError("--interval must be >= 1");
  networks::Models models(cfg.networks);
  load_for_inference(cfg, req.ablation, models);
  const auto manifest = load_manifest(cfg);

  std::vector<std::string> ids = req.clips;
  if (ids.empty()) ids = manifest.split(cfg.infer_split);
  if (ids.empty()) throw DataError("no clips selected for inference");

  const fs::path out = cfg.output / "infer";
  RunConfig effective = cfg;
  effective.interval = interval;
  write_effective_config(out, effective);

  std::vector<std::string> errors(ids.size());
#pragma omp parallel for schedule(dynamic) num_threads(cfg.jobs)
  for (int i = 0; i < static_cast<int>(ids.size()); ++i) {
    try {
      const auto clip = data::load_clip(cfg.dataset / "clips" / ids[i], manifest.normalization,
                                        manifest.num_classes, std::nullopt, manifest.ignore_index);
      const auto schedule = inference::schedule_keyframes(clip.size(), interval);
      const auto outs =
          req.oracle ? inference::segment_clip_oracle(clip, models, schedule, req.dump_intermediates)
                     : inference::segment_clip(clip, models, schedule,
                                               {method_mode(req.ablation), req.dump_intermediates});
      const fs::path clip_out = out / "clips" / ids[i];
      fs::create_directories(clip_out / "pred");
      if (req.dump_intermediates) fs::create_directories(clip_out / "debug");
      for (const auto& o : outs) {
        data::write_label_png(clip_out / "pred" / data::frame_file(o.index, "png"), o.pred);
        if (!req.dump_intermediates || o.key) continue;
        const std::string stem = data::frame_file(o.index, "png");
        data::write_unit_map_png16(clip_out / "debug" / ("distortion_" + stem), o.distortion.data(),
                                   o.distortion.h(), o.distortion.w());
        data::write_label_png(clip_out / "debug" / ("argmax_propagated_" + stem), o.pred_propagated_low);
        data::write_label_png(clip_out / "debug" / ("argmax_corrected_" + stem), o.pred_low);
      }
    } catch (const std::exception& e) {
      errors[i] = ids[i] + ": " + e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DataError(e);
  }
  say(log, "wrote predictions for " + std::to_string(ids.size()) + " clips to " + out.string());
}

// ----------------------------------------------------------------- eval

nlohmann::json cmd_eval(const RunConfig& cfg, const std::string& kind, const Ablation& ablation,
                        const LogFn& log) {
  const fs::path dir = eval_dir(cfg, ablation);
  fs::create_directories(dir);
  write_effective_config(dir, cfg);
  const int h = cfg.synth.height, w = cfg.synth.width;

  if (kind == "flops") {
    networks::Models models(cfg.networks);
    nlohmann::json nets = nlohmann::json::array();
    for (const auto& r : evaluation::network_flops(models, h, w)) nets.push_back(r.to_json());
    const auto cost = evaluation::build_cost_model(models, h, w);
    nlohmann::json j = {{"input", {h, w}}, {"networks", nets}, {"cost_model", cost.breakdown}};
    evaluation::write_json(dir / "flops.json", j);
    say(log, "C_seg " + std::to_string(cost.c_seg) + " FLOPs, C_warp " + std::to_string(cost.c_warp));
    return j;
  }

  if (kind == "cca") {
    const auto runs = read_pda_csv(dir / "pda.csv");
    const auto pda = evaluation::pda_curve("method", runs, cfg.d_min, cfg.d_max);
    networks::Models models(cfg.networks);
    const auto cost = evaluation::build_cost_model(models, h, w);
    const auto cca = evaluation::cca_curve(pda, cost);
    evaluation::write_cca_csv(dir / "cca.csv", pda, cca);
    write_text(dir / "cca.svg",
               evaluation::svg_line_chart("Computation cost vs accuracy", "mean GFLOPs per frame",
                                          "mIoU", {{"method", cca.points}}));
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : cca.points) j.push_back({p.x, p.y});
    return {{"cca", j}};
  }

  evaluation::PdaOptions opt;
  opt.d_min = cfg.d_min;
  opt.d_max = cfg.d_max;
  opt.jobs = cfg.jobs;

  std::vector<FusionMode> modes;
  if (kind == "pda") modes = {method_mode(ablation), FusionMode::kPropagationOnly, FusionMode::kNaive};
  else if (kind == "false-correction") modes = {method_mode(ablation), FusionMode::kNaive};
  else if (kind == "upper-bound") modes = {method_mode(ablation), FusionMode::kOracle};
  else throw ConfigError("unknown eval kind '" + kind + "' (pda, cca, false-correction, flops, upper-bound)");

  const auto manifest = load_manifest(cfg);
  opt.target_index = eval_target(cfg, manifest);
  networks::Models models(cfg.networks);
  load_for_inference(cfg, ablation, models);
  const auto clips = load_split_checked(cfg, manifest, cfg.eval_split);

  std::vector<evaluation::VariantRun> runs;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    runs.push_back(evaluation::run_pda(clips, models, modes[i], opt, manifest.num_classes));
    if (i == 0) runs.back().label = "method";
    say(log, runs.back().label + ": mean mIoU " + std::to_string(runs.back().mean_miou()));
  }

  nlohmann::json summary = {{"ablation", ablation.name()}, {"target_index", opt.target_index}};
  for (const auto& r : runs) summary["mean_miou"][r.label] = r.mean_miou();

  if (kind == "pda") {
    evaluation::write_pda_csv(dir / "pda.csv", curve_of(runs[0], "method", cfg));
    for (std::size_t i = 1; i < runs.size(); ++i) {
      evaluation::write_pda_csv(dir / ("pda_" + runs[i].label + ".csv"), curve_of(runs[i], runs[i].label, cfg));
    }
    cmd_plot(cfg, ablation);
  } else if (kind == "false-correction") {
    std::vector<std::pair<std::string, evaluation::FalseCorrectionStats>> rows;
    for (const auto& r : runs) {
      rows.emplace_back(r.label, r.false_correction);
      summary["ratio"][r.label] = r.false_correction.ratio();
    }
    evaluation::write_false_correction_csv(dir / "false_correction.csv", rows);
  } else {
    evaluation::write_pda_csv(dir / "pda_oracle.csv", curve_of(runs[1], "oracle", cfg));
    std::ofstream f(dir / "upper_bound.csv");
    if (!f) throw std::runtime_error("cannot write upper_bound.csv");
    f << "method,mean_miou,correct_pixels_checked,correct_pixels_flipped\n";
    for (const auto& r : runs) {
      f << r.label << ',' << r.mean_miou() << ',' << r.checked_correct << ',' << r.flipped_correct << '\n';
    }
    summary["oracle_flipped_correct"] = runs[1].flipped_correct;
  }
  evaluation::write_json(dir / (kind + "_summary.json"), summary);
  return summary;
}

void cmd_plot(const RunConfig& cfg, const Ablation& ablation) {
  const fs::path dir = eval_dir(cfg, ablation);
  const auto series = pda_series_in(dir);
  if (series.empty()) throw PrerequisiteError("no pda CSVs in " + dir.string() + " (run `eval pda` first)");
  write_text(dir / "pda.svg", evaluation::svg_line_chart("Propagation distance vs accuracy",
                                                         "propagation distance", "mIoU", series));
  const fs::path cca = dir / "cca.csv";
  if (!fs::exists(cca)) return;
  std::ifstream f(cca);
  std::string line;
  std::getline(f, line);
  evaluation::ChartSeries s{"method", {}};
  while (std::getline(f, line)) {
    double d = 0, x = 0, y = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &d, &x, &y) == 3) s.points.push_back({x, y});
  }
  write_text(dir / "cca.svg", evaluation::svg_line_chart("Computation cost vs accuracy",
                                                         "mean GFLOPs per frame", "mIoU", {s}));
}

}  // namespace flowseg::cli

#include "flowseg/training/trainer.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "flowseg/correction/correction.hpp"
#include "flowseg/distortion/distortion.hpp"
#include "flowseg/error.hpp"
#include "flowseg/nn/optim.hpp"
#include "flowseg/propagation/propagation.hpp"
#include "flowseg/training/dds.hpp"

namespace fs = std::filesystem;

namespace flowseg::training {

using networks::Mode;
using networks::Stage;

SegnetCache build_segnet_cache(networks::SegNet& segnet, const std::vector<data::VideoClip>& clips) {
  SegnetCache cache;
  cache.features.resize(clips.size());
  cache.pseudo.resize(clips.size());
  cache.low.resize(clips.size());
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const auto& clip = clips[c];
    std::vector<const Tensor*> frames;
    for (const auto& f : clip.frames) frames.push_back(&f);
    const auto [feat, logits] = segnet.forward(concat_batch(frames), Mode::kEval);
    for (int t = 0; t < clip.size(); ++t) {
      cache.features[c].push_back(feat.slice_batch(t, 1));
      cache.pseudo[c].push_back(argmax_labels(logits, t, clip.height(), clip.width()));
      cache.low[c].push_back(argmax_labels(logits, t, logits.h(), logits.w()));
    }
  }
  return cache;
}

double endpoint_error(const Tensor& flow, const Tensor& target, Tensor* grad) {
  require_same_shape(flow, target, "endpoint_error");
  const std::size_t hw = flow.shape().plane();
  const double inv = 1.0 / static_cast<double>(flow.n() * hw);
  if (grad) *grad = Tensor(flow.shape());
  double total = 0;
  for (int i = 0; i < flow.n(); ++i) {
    for (std::size_t p = 0; p < hw; ++p) {
      const double du = flow.plane(i, 0)[p] - target.plane(i, 0)[p];
      const double dv = flow.plane(i, 1)[p] - target.plane(i, 1)[p];
      const double e = std::sqrt(du * du + dv * dv + 1e-12);
      total += e;
      if (grad) {
        grad->plane(i, 0)[p] = static_cast<float>(du / e * inv);
        grad->plane(i, 1)[p] = static_cast<float>(dv / e * inv);
      }
    }
  }
  return total * inv;
}

void check_prerequisites(Stage stage, const fs::path& ckpt_in) {
  for (Stage s : networks::stage_prerequisites(stage)) {
    if (!networks::checkpoint_exists(ckpt_in, s)) {
      throw PrerequisiteError("stage '" + networks::to_string(stage) + "' needs the '" +
                              networks::to_string(s) + "' checkpoint in " + ckpt_in.string() +
                              "; stages run in order segnet, flow-pretrain, dmnet, joint");
    }
  }
}

namespace {

class CsvLog {
 public:
  CsvLog(const fs::path& path, const std::string& header) {
    if (path.empty()) return;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path);
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << header << '\n';
  }
  template <typename... Ts>
  void row(const Ts&... values) {
    if (!out_.is_open()) return;
    std::size_t i = 0;
    ((out_ << (i++ ? "," : "") << values), ...);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

int samples_per_epoch(const StageConfig& sc, std::size_t clips) {
  return sc.samples_per_epoch > 0 ? sc.samples_per_epoch : static_cast<int>(clips);
}

Tensor hflip(const Tensor& x) {
  Tensor out(x.shape());
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < x.c(); ++c) {
      for (int y = 0; y < x.h(); ++y) {
        for (int xx = 0; xx < x.w(); ++xx) out.at(i, c, y, xx) = x.at(i, c, y, x.w() - 1 - xx);
      }
    }
  }
  return out;
}

data::LabelMap hflip(const data::LabelMap& l) {
  data::LabelMap out = l;
  for (int y = 0; y < l.height; ++y) {
    for (int x = 0; x < l.width; ++x) out.at(y, x) = l.at(y, l.width - 1 - x);
  }
  return out;
}

/// Drives epochs and steps for one stage; `step` returns the step's loss.
template <typename StepFn>
StageReport run_epochs(const std::string& stage, const StageConfig& sc, std::size_t clips,
                       nn::Adam& adam, const LogFn& log, StepFn step) {
  StageReport report;
  report.stage = stage;
  const int per_epoch = samples_per_epoch(sc, clips);
  const int steps_per_epoch = (per_epoch + sc.batch_size - 1) / sc.batch_size;
  for (int epoch = 0; epoch < sc.epochs; ++epoch) {
    const float lr = sc.lr_at(epoch);
    double sum = 0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      const int batch = std::min(sc.batch_size, per_epoch - s * sc.batch_size);
      adam.zero_grad();
      const double loss = step(report.steps, batch, lr);
      adam.step(lr);
      if (report.steps == 0) report.first_loss = loss;
      report.final_loss = loss;
      sum += loss;
      ++report.steps;
    }
    if (log) {
      log(stage + " epoch " + std::to_string(epoch + 1) + "/" + std::to_string(sc.epochs) +
          " loss " + fmt(sum / steps_per_epoch) + " lr " + fmt(lr));
    }
  }
  return report;
}

StageReport train_segnet(networks::Models& m, const std::vector<data::VideoClip>& train,
                         const TrainConfig& cfg, std::mt19937_64& rng, CsvLog& csv,
                         const LogFn& log) {
  networks::ParamSet set;
  m.segnet.collect(set);
  nn::Adam adam(set.params);
  const StageConfig& sc = cfg.segnet;
  std::vector<std::pair<int, int>> labeled;
  for (std::size_t c = 0; c < train.size(); ++c) {
    for (const auto& [t, l] : train[c].labels) labeled.emplace_back(static_cast<int>(c), t);
  }
  if (labeled.empty()) throw DataError("segnet stage: no labeled training frames");
  std::uniform_int_distribution<std::size_t> pick(0, labeled.size() - 1);
  std::bernoulli_distribution flip(0.5);

  return run_epochs("segnet", sc, train.size(), adam, log, [&](int step, int batch, float lr) {
    std::vector<Tensor> frames;
    std::vector<data::LabelMap> labels;
    for (int b = 0; b < batch; ++b) {
      const auto [c, t] = labeled[pick(rng)];
      const bool f = sc.hflip && flip(rng);
      frames.push_back(f ? hflip(train[c].frames[t]) : train[c].frames[t]);
      labels.push_back(f ? hflip(train[c].labels.at(t)) : train[c].labels.at(t));
    }
    std::vector<const Tensor*> fp;
    std::vector<const data::LabelMap*> lp;
    for (int b = 0; b < batch; ++b) {
      fp.push_back(&frames[b]);
      lp.push_back(&labels[b]);
    }
    networks::SegNet::Tape tape;
    nn::Cache head_cache;
    const Tensor feat = m.segnet.features(concat_batch(fp), Mode::kTrain, &tape);
    const Tensor logits = m.segnet.head().forward(feat, &head_cache);
    const auto loss = correction::cross_entropy_loss(logits, lp);
    m.segnet.backward(m.segnet.head().backward(loss.dlogits, head_cache), tape);
    csv.row(step, fmt(loss.value), fmt(lr));
    return loss.value;
  });
}

StageReport train_flow(networks::Models& m, const std::vector<data::VideoClip>& train,
                       const TrainConfig& cfg, std::mt19937_64& rng, CsvLog& csv,
                       const LogFn& log) {
  for (const auto& clip : train) {
    if (clip.gt_flows.empty()) {
      throw DataError("flow-pretrain stage: clip " + clip.clip_id + " has no ground-truth flow");
    }
  }
  networks::ParamSet set;
  m.flownet.collect(set);
  nn::Adam adam(set.params);
  std::uniform_int_distribution<std::size_t> pick_clip(0, train.size() - 1);
  std::bernoulli_distribution is_static(cfg.static_pair_fraction);

  return run_epochs("flow-pretrain", cfg.flow_pretrain, train.size(), adam, log,
                    [&](int step, int batch, float lr) {
    std::vector<const Tensor*> a, b, target;
    std::vector<Tensor> zeros;
    zeros.reserve(batch);
    for (int k = 0; k < batch; ++k) {
      const auto& clip = train[pick_clip(rng)];
      const int t = std::uniform_int_distribution<int>(0, clip.size() - 2)(rng);
      a.push_back(&clip.frames[t]);
      if (is_static(rng)) {
        b.push_back(&clip.frames[t]);
        zeros.emplace_back(1, 2, clip.height(), clip.width());
        target.push_back(&zeros.back());
      } else {
        b.push_back(&clip.frames[t + 1]);
        target.push_back(&clip.gt_flows.at(t));
      }
    }
    networks::FlowNet::Tape tape;
    const Tensor flow = m.flownet.forward(concat_batch(a), concat_batch(b), Mode::kTrain, &tape);
    Tensor grad;
    const double epe = endpoint_error(flow, concat_batch(target), &grad);
    m.flownet.backward(grad, tape);
    csv.row(step, fmt(epe), fmt(lr));
    return epe;
  });
}

StageReport train_dmnet(networks::Models& m, const std::vector<data::VideoClip>& train,
                        const TrainConfig& cfg, std::mt19937_64& rng, CsvLog& csv,
                        const LogFn& log) {
  const SegnetCache cache = build_segnet_cache(m.segnet, train);
  networks::ParamSet set;
  m.dmnet.collect(set);
  nn::Adam adam(set.params);
  std::uniform_int_distribution<std::size_t> pick_clip(0, train.size() - 1);

  return run_epochs("dmnet", cfg.dmnet, train.size(), adam, log, [&](int step, int batch, float lr) {
    std::vector<const Tensor*> src, cur, feat;
    std::vector<const data::LabelMap*> seg_cur;
    for (int k = 0; k < batch; ++k) {
      const std::size_t c = pick_clip(rng);
      const auto [t, tk] = data::sample_dmnet_pair(train[c].size(), rng, cfg.dmnet_k_min, cfg.dmnet_k_max);
      src.push_back(&train[c].frames[t]);
      cur.push_back(&train[c].frames[tk]);
      feat.push_back(&cache.features[c][t]);
      seg_cur.push_back(&cache.low[c][tk]);
    }
    const Tensor src_frames = concat_batch(src);
    const Tensor cur_frames = concat_batch(cur);
    // One long warp from t to t + k.
    const Tensor flow = m.flownet.forward(src_frames, cur_frames, Mode::kEval, nullptr);
    const Tensor prop_frames = propagation::warp_bilinear(src_frames, flow);
    const Tensor prop_feat = propagation::warp_bilinear(
        concat_batch(feat), propagation::downscale_flow(flow, networks::kFeatureStride));
    const Tensor prop_logits = m.segnet.head().forward(prop_feat, nullptr);

    Tensor gt(batch, 1, prop_logits.h(), prop_logits.w());
    data::Mask valid;
    for (int k = 0; k < batch; ++k) {
      const auto seg_prop = argmax_labels(prop_logits, k, prop_logits.h(), prop_logits.w());
      const auto g = distortion::distortion_ground_truth(seg_prop, *seg_cur[k]);
      std::copy(g.values.data(), g.values.data() + g.values.size(), gt.item(k));
      valid.insert(valid.end(), g.valid.begin(), g.valid.end());
    }

    nn::Tape tape;
    const Tensor both = m.dmnet.features(concat_batch<float>({&cur_frames, &prop_frames}),
                                         Mode::kTrain, &tape);
    const Tensor f_cur = both.slice_batch(0, batch);
    const Tensor f_prop = both.slice_batch(batch, batch);
    const Tensor s = distortion::similarity_map(f_cur, f_prop);
    const Tensor md = distortion::distortion_from_similarity(s);
    const auto loss = distortion::dmnet_loss(md, gt, &valid, true);
    Tensor ds = loss.grad;
    for (float& v : ds.span()) v *= -0.5f;
    Tensor dcur, dprop;
    distortion::similarity_map_backward(f_cur, f_prop, ds, &dcur, &dprop);
    m.dmnet.backward(concat_batch<float>({&dcur, &dprop}), tape);

    double pos = 0;
    for (float v : gt.span()) pos += v;
    csv.row(step, fmt(loss.value), fmt(pos / static_cast<double>(gt.size())), fmt(lr));
    return loss.value;
  });
}

StageReport train_joint(networks::Models& m, const std::vector<data::VideoClip>& train,
                        const TrainConfig& cfg, std::mt19937_64& rng, CsvLog& csv,
                        const LogFn& log, int annotated_index) {
  const SegnetCache cache = build_segnet_cache(m.segnet, train);
  networks::ParamSet set = m.stage_params(Stage::kJoint);
  nn::Adam adam(set.params);
  std::uniform_int_distribution<std::size_t> pick_clip(0, train.size() - 1);
  const Ablation& ab = cfg.ablation;

  return run_epochs("joint", cfg.joint, train.size(), adam, log, [&](int step, int batch, float lr) {
    std::vector<DdsSample> samples;
    std::vector<data::TrainingTriplet> triplets;
    triplets.reserve(batch);
    for (int k = 0; k < batch; ++k) {
      const std::size_t c = pick_clip(rng);
      const auto& clip = train[c];
      triplets.push_back(data::sample_training_triplet(clip, rng, cfg.triplet_target, annotated_index));
      const auto& tr = triplets.back();
      DdsSample s;
      s.f1 = &clip.frames[tr.f1];
      s.f3 = &clip.frames[tr.f3];
      s.fs1 = &cache.features[c][tr.f1];
      s.gt3 = &tr.gt;
      if (ab.dds && tr.f2) {
        s.f2 = &clip.frames[*tr.f2];
        s.pseudo2 = &cache.pseudo[c][*tr.f2];
      }
      samples.push_back(s);
    }
    const DdsResult r = dds_step(m, samples, ab, true);
    auto opt = [](const LossBundle& b, double v) { return b.present ? fmt(v) : std::string(); };
    csv.row(step, opt(r.at_f2, r.at_f2.l_p), opt(r.at_f2, r.at_f2.l_c), opt(r.at_f2, r.at_f2.l_dgfl),
            fmt(r.at_f3.l_p), fmt(r.at_f3.l_c), fmt(r.at_f3.l_dgfl), fmt(r.total), fmt(lr));
    return r.total;
  });
}

}  // namespace

StageReport train_stage(Stage stage, networks::Models& models,
                        const std::vector<data::VideoClip>& train, const TrainConfig& config,
                        const fs::path& ckpt_in, const fs::path& ckpt_out,
                        const fs::path& metrics_csv, const LogFn& log, int annotated_index) {
  config.validate();
  if (train.empty()) throw DataError("no training clips");
  check_prerequisites(stage, ckpt_in);
  std::mt19937_64 rng(config.seed * 1000003ULL + static_cast<std::uint64_t>(stage));

  StageReport report;
  switch (stage) {
    case Stage::kSegnet: {
      CsvLog csv(metrics_csv, "step,loss,lr");
      report = train_segnet(models, train, config, rng, csv, log);
      break;
    }
    case Stage::kFlowPretrain: {
      networks::load_checkpoint(ckpt_in, Stage::kSegnet, models);
      CsvLog csv(metrics_csv, "step,epe,lr");
      report = train_flow(models, train, config, rng, csv, log);
      break;
    }
    case Stage::kDmnet: {
      networks::load_checkpoint(ckpt_in, Stage::kSegnet, models);
      networks::load_checkpoint(ckpt_in, Stage::kFlowPretrain, models);
      CsvLog csv(metrics_csv, "step,loss,positive_fraction,lr");
      report = train_dmnet(models, train, config, rng, csv, log);
      break;
    }
    case Stage::kJoint: {
      networks::load_checkpoint(ckpt_in, Stage::kSegnet, models);
      networks::load_checkpoint(ckpt_in, Stage::kFlowPretrain, models);
      networks::load_checkpoint(ckpt_in, Stage::kDmnet, models);
      CsvLog csv(metrics_csv, "step,L_P@F2,L_C@F2,L_DGFL@F2,L_P@F3,L_C@F3,L_DGFL@F3,L_total,lr");
      report = train_joint(models, train, config, rng, csv, log, annotated_index);
      break;
    }
  }

  networks::CheckpointManifest manifest;
  manifest.seed = config.seed;
  manifest.epoch = config.stage(networks::to_string(stage)).epochs;
  manifest.extra = {{"steps", report.steps},
                    {"first_loss", report.first_loss},
                    {"final_loss", report.final_loss}};
  if (stage == Stage::kJoint) manifest.extra["ablation"] = config.ablation.name();
  networks::save_checkpoint(ckpt_out, stage, models, manifest);
  return report;
}

}  // namespace flowseg::training

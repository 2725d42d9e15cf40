#include "flowseg/evaluation/runner.hpp"

#include <algorithm>

#include "flowseg/distortion/distortion.hpp"
#include "flowseg/error.hpp"
#include "flowseg/propagation/propagation.hpp"
#include "flowseg/training/dds.hpp"

namespace flowseg::evaluation {

std::vector<networks::FlopsReport> network_flops(networks::Models& models, int h, int w) {
  return {networks::describe_flops(models.segnet.spec(h, w), h, w),
          networks::describe_flops(models.flownet.spec(h, w), h, w),
          networks::describe_flops(models.dmnet.spec(h, w), h, w),
          networks::describe_flops(models.cfnet.spec(h, w), h, w)};
}

CostModel build_cost_model(networks::Models& models, int h, int w) {
  using networks::LayerKind;
  using networks::LayerSpec;
  const auto reports = network_flops(models, h, w);
  const auto& seg = reports[0];
  const auto& flow = reports[1];
  const auto& dm = reports[2];
  const auto& cf = reports[3];

  const int s = networks::kFeatureStride;
  const int fh = h / s, fw = w / s;
  const int c = models.cfg.feature_channels;
  const int k = models.cfg.num_classes;
  const int cd = models.cfg.dmnet_channels;
  auto bilinear = [](int ho, int wo, int co) {
    LayerSpec l;
    l.kind = LayerKind::kBilinearUpsampling;
    l.in_channels = l.out_channels = co;
    l.in_h = l.out_h = ho;
    l.in_w = l.out_w = wo;
    return static_cast<double>(networks::layer_flops(l));
  };
  double head = 0;
  for (const auto& l : seg.layers) {
    if (l.name.rfind("segnet.head", 0) == 0 || l.name == "segnet.logits_upsample") head += l.flops;
  }
  const double frame_warp = bilinear(h, w, 3);
  const double feature_warp = bilinear(fh, fw, c);
  const double flow_rescale = bilinear(fh, fw, 2) + 2.0 * fh * fw;
  // Cosine: per position 3 multiply-adds per channel plus norms and division,
  // then the affine map to [0, 1].
  const double similarity = static_cast<double>(fh) * fw * (6.0 * cd + 7.0);
  const double fusion = 4.0 * fh * fw * c;

  CostModel m;
  m.input_h = h;
  m.input_w = w;
  m.c_seg = static_cast<double>(seg.total);
  m.c_warp = static_cast<double>(flow.total) + static_cast<double>(cf.total) +
             2.0 * static_cast<double>(dm.total) + head + frame_warp + feature_warp +
             flow_rescale + similarity + fusion;
  m.breakdown = {{"key",
                  {{"segnet_with_head", seg.total}}},
                 {"non_key",
                  {{"flownet", flow.total},
                   {"cfnet", cf.total},
                   {"dmnet_two_branches", 2 * dm.total},
                   {"head_and_upsample", head},
                   {"frame_warp", frame_warp},
                   {"feature_warp", feature_warp},
                   {"flow_rescale", flow_rescale},
                   {"similarity", similarity},
                   {"fusion", fusion}}},
                 {"c_seg", m.c_seg},
                 {"c_warp", m.c_warp},
                 {"num_classes", k},
                 {"input", {h, w}}};
  return m;
}

std::map<int, MiouResult> VariantRun::miou_by_distance() const {
  std::map<int, MiouResult> out;
  for (const auto& [d, cm] : by_distance) out[d] = miou(cm);
  return out;
}

double VariantRun::mean_miou() const {
  const auto m = miou_by_distance();
  if (m.empty()) throw std::invalid_argument("mean_miou: no runs");
  double s = 0;
  for (const auto& [d, r] : m) s += r.mean;
  return s / static_cast<double>(m.size());
}

namespace {

struct ClipResult {
  std::map<int, ConfusionMatrix> cms;
  FalseCorrectionStats fc;
  std::int64_t flipped = 0;
  std::int64_t checked = 0;
  std::string error;
};

}  // namespace

VariantRun run_pda(const std::vector<data::VideoClip>& clips, networks::Models& models,
                   inference::FusionMode mode, const PdaOptions& opt, int num_classes) {
  if (clips.empty()) throw DataError("pda: no evaluation clips");
  if (opt.d_min < 1 || opt.d_max < opt.d_min) throw ConfigError("pda: invalid distance range");
  VariantRun run;
  run.mode = mode;
  run.label = inference::to_string(mode);
  std::vector<ClipResult> results(clips.size());

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, opt.jobs))
  for (int ci = 0; ci < static_cast<int>(clips.size()); ++ci) {
    ClipResult& r = results[ci];
    try {
      const auto& clip = clips[ci];
      const int target = opt.target_index;
      if (!clip.has_label(target)) {
        throw DataError(clip.clip_id + ": evaluated frame " + std::to_string(target) + " has no label");
      }
      if (target - opt.d_max < 0) {
        throw DataError(clip.clip_id + ": too few frames before " + std::to_string(target));
      }
      for (int d = opt.d_min; d <= opt.d_max; ++d) {
        const auto outs = inference::segment_from_key(clip, models, target - d, target, {mode, false});
        const auto& last = outs.back();
        const auto& gt = clip.labels.at(target);
        auto [it, inserted] = r.cms.try_emplace(d, num_classes);
        it->second.add(last.pred, gt);
        r.fc.merge(false_correction_stats(last.pred_propagated, last.pred, gt));
        for (const auto& o : outs) {
          if (o.key || !clip.has_label(o.index)) continue;
          const auto g = clip.labels.at(o.index).resize_nearest(o.pred_low.height, o.pred_low.width);
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (g.ignored(i) || o.pred_propagated_low.values[i] != g.values[i]) continue;
            ++r.checked;
            r.flipped += o.pred_low.values[i] != g.values[i];
          }
        }
      }
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  }

  for (const auto& r : results) {
    if (!r.error.empty()) throw DataError(r.error);
    for (const auto& [d, cm] : r.cms) {
      auto [it, inserted] = run.by_distance.try_emplace(d, num_classes);
      it->second.merge(cm);
    }
    run.false_correction.merge(r.fc);
    run.flipped_correct += r.flipped;
    run.checked_correct += r.checked;
  }
  return run;
}

MiouResult per_frame_miou(const std::vector<data::VideoClip>& clips, networks::Models& models,
                          int num_classes, int jobs) {
  std::vector<ConfusionMatrix> cms(clips.size(), ConfusionMatrix(num_classes));
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (int ci = 0; ci < static_cast<int>(clips.size()); ++ci) {
    for (const auto& [t, gt] : clips[ci].labels) {
      cms[ci].add(inference::segment_frame(clips[ci].frames[t], models), gt);
    }
  }
  ConfusionMatrix total(num_classes);
  for (const auto& cm : cms) total.merge(cm);
  return miou(total);
}

DistortionAp distortion_ap(const std::vector<data::VideoClip>& clips, networks::Models& models,
                           int k_min, int k_max, int t_stride) {
  if (k_min < 1 || k_max < k_min || t_stride < 1) throw std::invalid_argument("distortion_ap: bad range");
  std::vector<float> scores;
  std::vector<std::uint8_t> targets;
  for (const auto& clip : clips) {
    std::vector<Tensor> features;
    std::vector<data::LabelMap> low;
    for (const auto& frame : clip.frames) {
      auto [f, logits] = models.segnet.forward(frame);
      low.push_back(training::argmax_labels(logits, 0, logits.h(), logits.w()));
      features.push_back(std::move(f));
    }
    for (int t = 0; t < clip.size(); t += t_stride) {
      for (int k = k_min; k <= k_max && t + k < clip.size(); ++k) {
        const Tensor& src = clip.frames[t];
        const Tensor& cur = clip.frames[t + k];
        const Tensor flow = models.flownet.forward(src, cur, networks::Mode::kEval, nullptr);
        const Tensor prop_frame = propagation::warp_bilinear(src, flow);
        const Tensor prop_feat = propagation::warp_bilinear(
            features[t], propagation::downscale_flow(flow, networks::kFeatureStride));
        const Tensor prop_logits = models.segnet.head().forward(prop_feat, nullptr);
        const auto seg_prop = training::argmax_labels(prop_logits, 0, prop_logits.h(), prop_logits.w());
        const auto gt = distortion::distortion_ground_truth(seg_prop, low[t + k]);
        const Tensor m = distortion::predict_distortion(prop_frame, cur, models.dmnet);
        for (std::size_t p = 0; p < gt.valid.size(); ++p) {
          if (!gt.valid[p]) continue;
          scores.push_back(m.data()[p]);
          targets.push_back(gt.values.data()[p] > 0.5f ? 1 : 0);
        }
      }
    }
  }
  if (scores.empty()) throw DataError("distortion_ap: no evaluable frame pairs");
  DistortionAp r;
  r.positions = static_cast<std::int64_t>(scores.size());
  r.prevalence = static_cast<double>(std::count(targets.begin(), targets.end(), 1)) / scores.size();
  r.ap = distortion::average_precision(scores, targets);
  return r;
}

}  // namespace flowseg::evaluation

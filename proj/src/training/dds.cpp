#include "flowseg/training/dds.hpp"

#include "flowseg/distortion/distortion.hpp"
#include "flowseg/propagation/propagation.hpp"

namespace flowseg::training {

using networks::kFeatureStride;
using networks::Mode;

double frame_loss(double l_p, double l_c, double l_dgfl) { return (l_p + l_c + l_dgfl) / 3.0; }

LossBundle make_bundle(double l_p, double l_c, double l_dgfl) {
  return {l_p, l_c, l_dgfl, frame_loss(l_p, l_c, l_dgfl), true};
}

correction::Loss<float> propagation_loss(const Tensor& logits_p,
                                         const std::vector<const data::LabelMap*>& labels) {
  return correction::cross_entropy_loss(logits_p, labels);
}

correction::Loss<float> correction_loss(const Tensor& logits_c,
                                        const std::vector<const data::LabelMap*>& labels) {
  return correction::cross_entropy_loss(logits_c, labels);
}

data::LabelMap argmax_labels(const Tensor& logits, int item, int out_h, int out_w) {
  Tensor x = logits.slice_batch(item, 1);
  if (x.h() != out_h || x.w() != out_w) x = kernels::resize_bilinear(x, out_h, out_w);
  data::LabelMap out(out_h, out_w, x.c());
  const std::size_t hw = x.shape().plane();
  for (std::size_t p = 0; p < hw; ++p) {
    int best = 0;
    float bv = x.plane(0, 0)[p];
    for (int c = 1; c < x.c(); ++c) {
      const float v = x.plane(0, c)[p];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out.values[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

data::LabelMap pseudo_label(const Tensor& frame, networks::SegNet& segnet) {
  const auto [feature, logits] = segnet.forward(frame, Mode::kEval);
  return argmax_labels(logits, 0, frame.h(), frame.w());
}

namespace {

Tensor stack(const std::vector<const Tensor*>& parts) { return concat_batch(parts); }

Tensor scaled(const Tensor& x, float s) {
  Tensor out = x;
  for (float& v : out.span()) v *= s;
  return out;
}

/// Everything one warp leg keeps for its backward pass.
struct Leg {
  networks::FlowNet::Tape flow_tape;
  Tensor flow, flow_small, src_feature, prop_frame;
  Tensor f_p, f_c, m_fuse;
  nn::Cache head_p, head_c, head_cc;
  correction::Loss<float> loss_p, loss_c, loss_dgfl;
  LossBundle bundle;
};

void run_leg(networks::Models& m, Leg& leg, const Tensor& prev_frames, const Tensor& next_frames,
             const Tensor& prop_frames, const Tensor& src_feature, const Tensor& f_cc,
             const std::vector<const data::LabelMap*>& labels, const Ablation& ablation,
             Mode mode, bool keep) {
  leg.flow = m.flownet.forward(prev_frames, next_frames, mode, keep ? &leg.flow_tape : nullptr);
  leg.prop_frame = propagation::warp_bilinear(prop_frames, leg.flow);
  leg.flow_small = propagation::downscale_flow(leg.flow, kFeatureStride);
  leg.src_feature = src_feature;
  leg.f_p = propagation::warp_bilinear(src_feature, leg.flow_small);

  const Tensor md = distortion::predict_distortion(leg.prop_frame, next_frames, m.dmnet);
  leg.m_fuse = ablation.dgfc ? md : Tensor(md.shape(), 0.5f);
  const Tensor m_dgfl = ablation.dgfl ? md : Tensor(md.shape(), 1.0f);
  leg.f_c = correction::fuse_features(leg.f_p, f_cc, leg.m_fuse);

  auto& head = m.segnet.head();
  const Tensor logits_p = head.forward(leg.f_p, &leg.head_p);
  const Tensor logits_c = head.forward(leg.f_c, &leg.head_c);
  const Tensor logits_cc = head.forward(f_cc, &leg.head_cc);
  leg.loss_p = propagation_loss(logits_p, labels);
  leg.loss_c = correction_loss(logits_c, labels);
  leg.loss_dgfl = correction::dgfl_loss(logits_cc, labels, m_dgfl);
  leg.bundle = make_bundle(leg.loss_p.value, leg.loss_c.value, leg.loss_dgfl.value);
}

/// Backward of one leg given the extra gradient arriving at f_C from later
/// legs (may be empty). Returns dL/d(src_feature) when requested.
Tensor backward_leg(networks::Models& m, Leg& leg, float weight,
                    const Tensor* df_c_extra, Tensor* df_cc, bool want_src_grad) {
  auto& head = m.segnet.head();
  const float s = weight / 3.0f;
  Tensor df_c = head.backward(scaled(leg.loss_c.dlogits, s), leg.head_c);
  if (df_c_extra != nullptr) add_inplace(df_c, *df_c_extra);
  Tensor df_p, dcc;
  correction::fuse_features_backward(leg.m_fuse, df_c, &df_p, &dcc);
  add_inplace(df_p, head.backward(scaled(leg.loss_p.dlogits, s), leg.head_p));
  add_inplace(dcc, head.backward(scaled(leg.loss_dgfl.dlogits, s), leg.head_cc));
  *df_cc = std::move(dcc);

  Tensor dsrc, dflow_small;
  propagation::warp_bilinear_backward(leg.src_feature, leg.flow_small, df_p,
                                      want_src_grad ? &dsrc : nullptr, &dflow_small);
  const Tensor dflow =
      propagation::downscale_flow_backward(dflow_small, leg.flow.shape(), kFeatureStride);
  m.flownet.backward(dflow, leg.flow_tape);
  return dsrc;
}

}  // namespace

DdsResult dds_step(networks::Models& models, const std::vector<DdsSample>& batch,
                   const Ablation& ablation, bool backward) {
  if (batch.empty()) throw std::invalid_argument("dds_step: empty batch");
  const Mode mode = backward ? Mode::kTrain : Mode::kEval;
  const int n = static_cast<int>(batch.size());

  std::vector<int> with_f2;
  std::vector<int> slot(n, -1);
  for (int i = 0; i < n; ++i) {
    if (ablation.dds && batch[i].f2 != nullptr) {
      slot[i] = static_cast<int>(with_f2.size());
      with_f2.push_back(i);
    }
  }
  const int a = static_cast<int>(with_f2.size());

  // One CFNet pass over [F2 of the two-leg items, F3 of every item] so
  // BatchNorm sees the whole batch.
  std::vector<const Tensor*> cf_in;
  for (int i : with_f2) cf_in.push_back(batch[i].f2);
  for (const auto& s : batch) cf_in.push_back(s.f3);
  networks::CFNet::Tape cf_tape;
  const Tensor f_cc_all = models.cfnet.forward(stack(cf_in), mode, backward ? &cf_tape : nullptr);
  const Tensor f_cc2 = a > 0 ? f_cc_all.slice_batch(0, a) : Tensor();
  const Tensor f_cc3 = f_cc_all.slice_batch(a, n);

  Leg leg2, leg3;
  if (a > 0) {
    std::vector<const Tensor*> f1, f2, fs1;
    std::vector<const data::LabelMap*> labels;
    for (int i : with_f2) {
      f1.push_back(batch[i].f1);
      f2.push_back(batch[i].f2);
      fs1.push_back(batch[i].fs1);
      labels.push_back(batch[i].pseudo2);
    }
    const Tensor f1s = stack(f1);
    run_leg(models, leg2, f1s, stack(f2), f1s, stack(fs1), f_cc2, labels, ablation, mode, backward);
  }

  std::vector<Tensor> prev_frame(n), prop_frame(n), src_feature(n);
  for (int i = 0; i < n; ++i) {
    if (slot[i] >= 0) {
      prev_frame[i] = *batch[i].f2;
      prop_frame[i] = leg2.prop_frame.slice_batch(slot[i], 1);
      src_feature[i] = leg2.f_c.slice_batch(slot[i], 1);
    } else {
      prev_frame[i] = *batch[i].f1;
      prop_frame[i] = *batch[i].f1;
      src_feature[i] = *batch[i].fs1;
    }
  }
  auto ptrs = [](const std::vector<Tensor>& v) {
    std::vector<const Tensor*> p;
    for (const auto& t : v) p.push_back(&t);
    return p;
  };
  std::vector<const Tensor*> f3;
  std::vector<const data::LabelMap*> gt3;
  for (const auto& s : batch) {
    f3.push_back(s.f3);
    gt3.push_back(s.gt3);
  }
  run_leg(models, leg3, stack(ptrs(prev_frame)), stack(f3), stack(ptrs(prop_frame)),
          stack(ptrs(src_feature)), f_cc3, gt3, ablation, mode, backward);

  DdsResult result;
  result.at_f3 = leg3.bundle;
  if (a > 0) {
    result.at_f2 = leg2.bundle;
    result.total = 0.5 * (leg2.bundle.total + leg3.bundle.total);
  } else {
    result.total = leg3.bundle.total;
  }
  if (!backward) return result;

  const float w = a > 0 ? 0.5f : 1.0f;
  Tensor df_cc3, df_cc2;
  const Tensor dsrc3 = backward_leg(models, leg3, w, nullptr, &df_cc3, a > 0);
  Tensor df_cc_all;
  if (a > 0) {
    std::vector<Tensor> parts(a);
    for (int i : with_f2) parts[slot[i]] = dsrc3.slice_batch(i, 1);
    const Tensor df_c2 = stack(ptrs(parts));
    backward_leg(models, leg2, w, &df_c2, &df_cc2, false);
    df_cc_all = concat_batch<float>({&df_cc2, &df_cc3});
  } else {
    df_cc_all = std::move(df_cc3);
  }
  models.cfnet.backward(df_cc_all, cf_tape);
  return result;
}

}  // namespace flowseg::training

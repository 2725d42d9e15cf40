#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "flowseg/data/types.hpp"
#include "flowseg/kernels/resample.hpp"
#include "flowseg/tensor.hpp"

namespace flowseg::correction {

template <typename T>
void check_fusion_args(const BasicTensor<T>& f_p, const BasicTensor<T>& f_cc,
                       const BasicTensor<T>& m) {
  require_same_shape(f_p, f_cc, "fuse_features");
  if (m.c() != 1 || m.n() != f_p.n() || m.h() != f_p.h() || m.w() != f_p.w()) {
    throw std::invalid_argument("fuse_features: map " + m.shape().str() +
                                " does not match features " + f_p.shape().str());
  }
  for (T v : m.span()) {
    if (!(v >= T(0) && v <= T(1))) throw std::invalid_argument("fuse_features: map outside [0,1]");
  }
}

/// f_C = f_P * (1 - M) + f_CC * M with M broadcast over channels.
template <typename T>
BasicTensor<T> fuse_features(const BasicTensor<T>& f_p, const BasicTensor<T>& f_cc,
                             const BasicTensor<T>& m) {
  check_fusion_args(f_p, f_cc, m);
  BasicTensor<T> out(f_p.shape());
  const std::size_t hw = f_p.shape().plane();
  for (int i = 0; i < f_p.n(); ++i) {
    const T* mm = m.plane(i, 0);
    for (int c = 0; c < f_p.c(); ++c) {
      const T* a = f_p.plane(i, c);
      const T* b = f_cc.plane(i, c);
      T* o = out.plane(i, c);
      for (std::size_t p = 0; p < hw; ++p) o[p] = a[p] * (T(1) - mm[p]) + b[p] * mm[p];
    }
  }
  return out;
}

/// M is a constant: only the feature gradients are produced.
template <typename T>
void fuse_features_backward(const BasicTensor<T>& m, const BasicTensor<T>& d_out,
                            BasicTensor<T>* d_fp, BasicTensor<T>* d_fcc) {
  const std::size_t hw = d_out.shape().plane();
  if (d_fp) *d_fp = BasicTensor<T>(d_out.shape());
  if (d_fcc) *d_fcc = BasicTensor<T>(d_out.shape());
  for (int i = 0; i < d_out.n(); ++i) {
    const T* mm = m.plane(i, 0);
    for (int c = 0; c < d_out.c(); ++c) {
      const T* g = d_out.plane(i, c);
      for (std::size_t p = 0; p < hw; ++p) {
        if (d_fp) d_fp->plane(i, c)[p] = g[p] * (T(1) - mm[p]);
        if (d_fcc) d_fcc->plane(i, c)[p] = g[p] * mm[p];
      }
    }
  }
}

template <typename T>
struct Loss {
  double value = 0;
  /// Gradient with respect to the logits passed in.
  BasicTensor<T> dlogits;
};

/// -(1/N) sum w(p) log softmax(logits)(p)[gt(p)] over the N non-ignored
/// positions of every item; logits and labels share one resolution. A null
/// weight means w = 1.
template <typename T>
Loss<T> weighted_nll(const BasicTensor<T>& logits, const std::vector<const data::LabelMap*>& labels,
                     const BasicTensor<T>* weight) {
  const int n = logits.n(), k = logits.c();
  const std::size_t hw = logits.shape().plane();
  if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("weighted_nll: batch size");
  for (const auto* l : labels) {
    if (l->height != logits.h() || l->width != logits.w()) {
      throw std::invalid_argument("weighted_nll: label/logit size mismatch");
    }
  }
  if (weight && (weight->c() != 1 || weight->n() != n || weight->h() != logits.h() ||
                 weight->w() != logits.w())) {
    throw std::invalid_argument("weighted_nll: weight map shape");
  }
  std::size_t count = 0;
  for (const auto* l : labels) {
    for (std::size_t p = 0; p < hw; ++p) count += !l->ignored(p);
  }
  if (count == 0) throw std::invalid_argument("weighted_nll: every position is ignored");

  Loss<T> out;
  out.dlogits = BasicTensor<T>(logits.shape());
  const double inv = 1.0 / static_cast<double>(count);
  double total = 0;
  std::vector<double> z(k);
  for (int i = 0; i < n; ++i) {
    const data::LabelMap& gt = *labels[i];
    for (std::size_t p = 0; p < hw; ++p) {
      if (gt.ignored(p)) continue;
      const int y = gt.values[p];
      double mx = -INFINITY;
      for (int c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(logits.plane(i, c)[p]));
      double sum = 0;
      for (int c = 0; c < k; ++c) {
        z[c] = std::exp(static_cast<double>(logits.plane(i, c)[p]) - mx);
        sum += z[c];
      }
      const double w = weight ? static_cast<double>(weight->plane(i, 0)[p]) : 1.0;
      const double logp = static_cast<double>(logits.plane(i, y)[p]) - mx - std::log(sum);
      total -= w * logp;
      for (int c = 0; c < k; ++c) {
        const double prob = z[c] / sum;
        out.dlogits.plane(i, c)[p] = static_cast<T>(w * (prob - (c == y ? 1.0 : 0.0)) * inv);
      }
    }
  }
  out.value = total * inv;
  return out;
}

/// Loss on feature-resolution logits evaluated at label resolution: logits
/// (and the weight map, when given) are bilinearly upsampled first. The
/// returned gradient is with respect to the low-resolution logits.
template <typename T>
Loss<T> upsampled_nll(const BasicTensor<T>& logits, const std::vector<const data::LabelMap*>& labels,
                      const BasicTensor<T>* weight) {
  if (labels.empty()) throw std::invalid_argument("upsampled_nll: no labels");
  const int h = labels.front()->height, w = labels.front()->width;
  const BasicTensor<T> up = kernels::resize_bilinear(logits, h, w);
  BasicTensor<T> wup;
  if (weight) wup = kernels::resize_bilinear(*weight, h, w);
  Loss<T> full = weighted_nll(up, labels, weight ? &wup : nullptr);
  Loss<T> out;
  out.value = full.value;
  out.dlogits = kernels::resize_bilinear_backward(full.dlogits, logits.shape());
  return out;
}

/// Distortion-weighted cue loss: weight M (constant) on the cue logits.
template <typename T>
Loss<T> dgfl_loss(const BasicTensor<T>& logits_cc, const std::vector<const data::LabelMap*>& labels,
                  const BasicTensor<T>& m) {
  return upsampled_nll(logits_cc, labels, &m);
}

/// Unweighted cross-entropy used for both the propagated and corrected logits.
template <typename T>
Loss<T> cross_entropy_loss(const BasicTensor<T>& logits,
                           const std::vector<const data::LabelMap*>& labels) {
  return upsampled_nll<T>(logits, labels, nullptr);
}

}  // namespace flowseg::correction

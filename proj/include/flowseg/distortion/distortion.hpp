#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "flowseg/data/types.hpp"
#include "flowseg/networks/networks.hpp"
#include "flowseg/tensor.hpp"

namespace flowseg::distortion {

inline constexpr double kNormEps = 1e-8;
inline constexpr double kLogClamp = 1e-7;

/// Per-position cosine of the channel vectors, (N,1,h,w) in [-1,1].
template <typename T>
BasicTensor<T> similarity_map(const BasicTensor<T>& fa, const BasicTensor<T>& fb) {
  require_same_shape(fa, fb, "similarity_map");
  const int n = fa.n(), c = fa.c();
  const std::size_t hw = fa.shape().plane();
  BasicTensor<T> s(n, 1, fa.h(), fa.w());
  for (int i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < hw; ++p) {
      T dot = 0, na = 0, nb = 0;
      for (int ch = 0; ch < c; ++ch) {
        const T a = fa.plane(i, ch)[p];
        const T b = fb.plane(i, ch)[p];
        dot += a * b;
        na += a * a;
        nb += b * b;
      }
      const T v = dot / ((std::sqrt(na) + T(kNormEps)) * (std::sqrt(nb) + T(kNormEps)));
      s.plane(i, 0)[p] = std::clamp(v, T(-1), T(1));
    }
  }
  return s;
}

/// Gradients of similarity_map with respect to both inputs.
template <typename T>
void similarity_map_backward(const BasicTensor<T>& fa, const BasicTensor<T>& fb,
                             const BasicTensor<T>& ds, BasicTensor<T>* dfa,
                             BasicTensor<T>* dfb) {
  require_same_shape(fa, fb, "similarity_map_backward");
  const int n = fa.n(), c = fa.c();
  const std::size_t hw = fa.shape().plane();
  if (dfa) *dfa = BasicTensor<T>(fa.shape());
  if (dfb) *dfb = BasicTensor<T>(fb.shape());
  for (int i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < hw; ++p) {
      T dot = 0, na2 = 0, nb2 = 0;
      for (int ch = 0; ch < c; ++ch) {
        const T a = fa.plane(i, ch)[p];
        const T b = fb.plane(i, ch)[p];
        dot += a * b;
        na2 += a * a;
        nb2 += b * b;
      }
      const T na = std::sqrt(na2), nb = std::sqrt(nb2);
      const T da = na + T(kNormEps), db = nb + T(kNormEps);
      const T g = ds.plane(i, 0)[p];
      // s = dot / (da db); d da / d a = a / na
      for (int ch = 0; ch < c; ++ch) {
        const T a = fa.plane(i, ch)[p];
        const T b = fb.plane(i, ch)[p];
        if (dfa) {
          T v = b / (da * db);
          if (na > 0) v -= dot * a / (na * da * da * db);
          dfa->plane(i, ch)[p] = g * v;
        }
        if (dfb) {
          T v = a / (da * db);
          if (nb > 0) v -= dot * b / (nb * db * db * da);
          dfb->plane(i, ch)[p] = g * v;
        }
      }
    }
  }
}

/// M = (1 - S) / 2.
template <typename T>
BasicTensor<T> distortion_from_similarity(const BasicTensor<T>& s) {
  BasicTensor<T> m(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i) m.data()[i] = (T(1) - s.data()[i]) / T(2);
  return m;
}

/// M^D from the siamese DMNet features of the current and the propagated frame.
Tensor predict_distortion(const Tensor& prop_frame, const Tensor& cur_frame, networks::DMNet& dmnet);

/// Binary disagreement map; ignored positions are 0 and cleared in `valid`.
struct BinaryMap {
  Tensor values;
  data::Mask valid;

  std::size_t positives() const;
  std::size_t valid_count() const;
};

BinaryMap distortion_ground_truth(const data::LabelMap& seg_a, const data::LabelMap& seg_b);

struct LossValue {
  double value = 0;
  Tensor grad;
};

/// Binary cross-entropy averaged over valid positions. With `balance`, the
/// positive term is weighted by #neg/#pos clamped to [1, 100].
LossValue dmnet_loss(const Tensor& m_pred, const Tensor& m_gt, const data::Mask* valid,
                     bool balance = true);

/// Average precision of scores against binary targets over valid positions.
double average_precision(const std::vector<float>& scores, const std::vector<std::uint8_t>& targets);

}  // namespace flowseg::distortion

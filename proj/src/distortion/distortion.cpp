#include "flowseg/distortion/distortion.hpp"

#include <algorithm>
#include <numeric>


namespace flowseg::distortion {

Tensor predict_distortion(const Tensor& prop_frame, const Tensor& cur_frame,
                          networks::DMNet& dmnet) {
  if (prop_frame.shape() != cur_frame.shape()) {
    throw std::invalid_argument("predict_distortion: resolution mismatch");
  }
  const Tensor fc = dmnet.features(cur_frame, networks::Mode::kEval, nullptr);
  const Tensor fp = dmnet.features(prop_frame, networks::Mode::kEval, nullptr);
  return distortion_from_similarity(similarity_map(fc, fp));
}

std::size_t BinaryMap::positives() const {
  std::size_t k = 0;
  for (std::size_t i = 0; i < valid.size(); ++i) k += valid[i] && values.data()[i] > 0.5f;
  return k;
}

std::size_t BinaryMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1));
}

BinaryMap distortion_ground_truth(const data::LabelMap& seg_a, const data::LabelMap& seg_b) {
  if (seg_a.height != seg_b.height || seg_a.width != seg_b.width) {
    throw std::invalid_argument("distortion_ground_truth: shape mismatch");
  }
  BinaryMap out;
  out.values = Tensor(1, 1, seg_a.height, seg_a.width);
  out.valid.assign(seg_a.size(), 1);
  for (std::size_t i = 0; i < seg_a.size(); ++i) {
    if (seg_a.ignored(i) || seg_b.ignored(i)) {
      out.valid[i] = 0;
      continue;
    }
    out.values.data()[i] = seg_a.values[i] != seg_b.values[i] ? 1.0f : 0.0f;
  }
  return out;
}

LossValue dmnet_loss(const Tensor& m_pred, const Tensor& m_gt, const data::Mask* valid,
                     bool balance) {
  require_same_shape(m_pred, m_gt, "dmnet_loss");
  const std::size_t n = m_pred.size();
  if (valid != nullptr && valid->size() != n) throw std::invalid_argument("dmnet_loss: mask size");
  auto ok = [&](std::size_t i) { return valid == nullptr || (*valid)[i] != 0; };

  std::size_t count = 0, pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!ok(i)) continue;
    ++count;
    pos += m_gt.data()[i] > 0.5f;
  }
  if (count == 0) throw std::invalid_argument("dmnet_loss: no unmasked positions");
  double w_pos = 1.0;
  if (balance && pos > 0) {
    w_pos = std::clamp(static_cast<double>(count - pos) / static_cast<double>(pos), 1.0, 100.0);
  }

  LossValue out;
  out.grad = Tensor(m_pred.shape());
  double total = 0;
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < n; ++i) {
    if (!ok(i)) continue;
    const double y = m_gt.data()[i];
    const double raw = m_pred.data()[i];
    const double p = std::clamp(raw, kLogClamp, 1.0 - kLogClamp);
    total += -(w_pos * y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    if (raw == p) {
      out.grad.data()[i] = static_cast<float>(-(w_pos * y / p - (1.0 - y) / (1.0 - p)) * inv);
    }
  }
  out.value = total * inv;
  return out;
}

double average_precision(const std::vector<float>& scores, const std::vector<std::uint8_t>& targets) {
  if (scores.size() != targets.size()) throw std::invalid_argument("average_precision: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto positives = static_cast<std::size_t>(std::count(targets.begin(), targets.end(), 1));
  if (positives == 0) return 0.0;
  // Tied scores are ranked as one block so the result does not depend on order.
  double ap = 0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, block_tp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      block_tp += targets[order[j]];
      ++j;
    }
    tp += block_tp;
    seen = j;
    ap += static_cast<double>(block_tp) / positives * (static_cast<double>(tp) / seen);
    i = j;
  }
  return ap;
}

}  // namespace flowseg::distortion

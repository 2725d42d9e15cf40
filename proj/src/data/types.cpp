#include "flowseg/data/types.hpp"

#include <algorithm>

#include "flowseg/error.hpp"

namespace flowseg::data {

void LabelMap::validate() const {
  if (values.size() != static_cast<std::size_t>(height) * width) {
    throw DataError("label map storage does not match its extent");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int v = values[i];
    if (v != ignore_index && (v < 0 || v >= num_classes)) {
      throw DataError("label value " + std::to_string(v) + " outside [0," +
                      std::to_string(num_classes) + ") and not the ignore index");
    }
  }
}

LabelMap LabelMap::resize_nearest(int out_h, int out_w) const {
  LabelMap out(out_h, out_w, num_classes, ignore_index);
  for (int y = 0; y < out_h; ++y) {
    // sample at the centre of each output cell
    const int sy = std::min(height - 1, static_cast<int>((y + 0.5) * height / out_h));
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(width - 1, static_cast<int>((x + 0.5) * width / out_w));
      out.at(y, x) = at(sy, sx);
    }
  }
  return out;
}

nlohmann::json Normalization::to_json() const { return {{"mean", mean}, {"std", std}}; }

Normalization Normalization::from_json(const nlohmann::json& j) {
  Normalization n;
  for (const auto& [key, value] : j.items()) {
    if (key == "mean") n.mean = value.get<std::array<float, 3>>();
    else if (key == "std") n.std = value.get<std::array<float, 3>>();
    else throw ConfigError("unknown key normalization." + key);
  }
  for (float s : n.std) {
    if (!(s > 0.0f)) throw ConfigError("normalization.std must be positive");
  }
  return n;
}

void VideoClip::validate() const {
  for (const auto& f : frames) {
    if (f.n() != 1 || f.c() != 3 || f.h() != height() || f.w() != width()) {
      throw DataError(clip_id + ": frames do not share one resolution");
    }
  }
  for (const auto& [t, label] : labels) {
    if (t < 0 || t >= size()) throw DataError(clip_id + ": label index out of range");
    if (label.height != height() || label.width != width()) {
      throw DataError(clip_id + ": label/frame size mismatch at index " + std::to_string(t));
    }
    label.validate();
  }
  if (!gt_flows.empty()) {
    for (int t = 0; t + 1 < size(); ++t) {
      auto it = gt_flows.find(t);
      if (it == gt_flows.end()) throw DataError(clip_id + ": missing flow " + std::to_string(t));
      if (it->second.c() != 2 || it->second.h() != height() || it->second.w() != width()) {
        throw DataError(clip_id + ": flow/frame size mismatch at index " + std::to_string(t));
      }
    }
  }
}

}  // namespace flowseg::data

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowseg/tensor.hpp"

namespace flowseg::data {

inline constexpr int kDefaultIgnoreIndex = 255;

/// Dense class-index map. Every value is < num_classes or equals ignore_index.
struct LabelMap {
  int height = 0;
  int width = 0;
  int num_classes = 0;
  int ignore_index = kDefaultIgnoreIndex;
  std::vector<std::uint8_t> values;

  LabelMap() = default;
  LabelMap(int h, int w, int classes, int ignore = kDefaultIgnoreIndex)
      : height(h), width(w), num_classes(classes), ignore_index(ignore),
        values(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  bool ignored(std::size_t i) const { return values[i] == ignore_index; }
  std::size_t size() const { return values.size(); }

  /// Throws DataError on out-of-range values.
  void validate() const;
  /// Nearest-neighbour resampling (class indices are not interpolable).
  LabelMap resize_nearest(int out_h, int out_w) const;

  bool operator==(const LabelMap&) const = default;
};

/// Per-channel affine normalization applied to [0,1] pixel values.
struct Normalization {
  std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> std{0.5f, 0.5f, 0.5f};

  nlohmann::json to_json() const;
  static Normalization from_json(const nlohmann::json& j);
};

/// Binary mask (0/1) at image resolution.
using Mask = std::vector<std::uint8_t>;

/// One scene: ordered frames plus whatever ground truth exists for it.
/// frames are (1,3,H,W) normalized; gt_flows[t] is (1,2,H,W) and holds, at
/// each pixel of frame t+1, the displacement into frame t (backward warp
/// convention); occlusion[t] marks pixels of frame t+1 without a source in t.
struct VideoClip {
  std::string clip_id;
  std::vector<Tensor> frames;
  std::map<int, LabelMap> labels;
  std::map<int, Tensor> gt_flows;
  std::map<int, Mask> occlusion;
  /// Global index of frames[0] when a sub-range was loaded.
  int first_index = 0;

  int size() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames.front().h(); }
  int width() const { return frames.empty() ? 0 : frames.front().w(); }
  bool has_label(int t) const { return labels.count(t) != 0; }

  void validate() const;
};

}  // namespace flowseg::data

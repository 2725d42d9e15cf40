#pragma once

#include <optional>
#include <random>
#include <utility>

#include "flowseg/data/types.hpp"

namespace flowseg::data {

inline constexpr int kMaxTripletDistance = 9;

/// f1 < f2 < f3 with f3 labeled. f2 is absent when f3 - f1 == 1.
struct TrainingTriplet {
  int f1 = 0;
  std::optional<int> f2;
  int f3 = 0;
  LabelMap gt;

  int distance() const { return f3 - f1; }
};

enum class TripletTarget {
  /// f3 is the manifest's annotated frame (Cityscapes-style protocol).
  kAnnotated,
  /// f3 is any labeled frame with at least two predecessors.
  kAnyLabeled,
};

/// Uniform over the open interval (f1, f3); nullopt when it is empty.
std::optional<int> sample_intermediate(int f1, int f3, std::mt19937_64& rng);

/// f1 uniform over f3-9 .. f3-1 clipped to the clip, then f2 via sample_intermediate.
TrainingTriplet sample_training_triplet(const VideoClip& clip, std::mt19937_64& rng,
                                        TripletTarget target = TripletTarget::kAnyLabeled,
                                        int annotated_index = -1);

/// (t, t + k) with k uniform over [k_min, k_max] and t uniform over the valid starts.
std::pair<int, int> sample_dmnet_pair(int clip_length, std::mt19937_64& rng, int k_min = 1,
                                      int k_max = kMaxTripletDistance);

}  // namespace flowseg::data

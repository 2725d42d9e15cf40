#include "flowseg/data/sampling.hpp"

#include <algorithm>
#include <vector>

#include "flowseg/error.hpp"

namespace flowseg::data {

std::optional<int> sample_intermediate(int f1, int f3, std::mt19937_64& rng) {
  if (f3 - f1 < 2) return std::nullopt;
  return std::uniform_int_distribution<int>(f1 + 1, f3 - 1)(rng);
}

TrainingTriplet sample_training_triplet(const VideoClip& clip, std::mt19937_64& rng,
                                        TripletTarget target, int annotated_index) {
  int f3 = -1;
  if (target == TripletTarget::kAnnotated) {
    if (!clip.has_label(annotated_index) || annotated_index < 2) {
      throw DataError(clip.clip_id + ": annotated frame " + std::to_string(annotated_index) +
                      " is unlabeled or has fewer than two predecessors");
    }
    f3 = annotated_index;
  } else {
    std::vector<int> candidates;
    for (const auto& [t, label] : clip.labels) {
      if (t >= 2 && t < clip.size()) candidates.push_back(t);
    }
    if (candidates.empty()) throw DataError(clip.clip_id + ": no labeled frame with two predecessors");
    f3 = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
  }

  TrainingTriplet t;
  t.f3 = f3;
  t.f1 = std::uniform_int_distribution<int>(std::max(0, f3 - kMaxTripletDistance), f3 - 1)(rng);
  t.f2 = sample_intermediate(t.f1, f3, rng);
  t.gt = clip.labels.at(f3);
  return t;
}

std::pair<int, int> sample_dmnet_pair(int clip_length, std::mt19937_64& rng, int k_min,
                                      int k_max) {
  if (k_min < 1 || k_max < k_min) throw std::invalid_argument("sample_dmnet_pair: bad k range");
  if (clip_length <= k_max) {
    throw DataError("clip of length " + std::to_string(clip_length) +
                    " is too short for distance " + std::to_string(k_max));
  }
  const int k = std::uniform_int_distribution<int>(k_min, k_max)(rng);
  const int t = std::uniform_int_distribution<int>(0, clip_length - 1 - k)(rng);
  return {t, t + k};
}

}  // namespace flowseg::data

#pragma once

// On-disk layout:
//   <root>/manifest.json
//   <root>/clips/<clip_id>/frames/%06d.png     8-bit RGB
//   <root>/clips/<clip_id>/labels/%06d.png     8-bit class index, 255 = ignore
//   <root>/clips/<clip_id>/flows/%06d.flo      Middlebury flow, frame t -> t+1
//   <root>/clips/<clip_id>/occlusion/%06d.png  0/255

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowseg/data/types.hpp"

namespace flowseg::data {

inline constexpr float kFloMagic = 202021.25f;

std::string frame_file(int index, const char* ext);

void write_flo(const std::filesystem::path& path, const Tensor& flow);
Tensor read_flo(const std::filesystem::path& path);

void write_rgb_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& rgb, int h,
                   int w);
std::vector<std::uint8_t> read_rgb_png(const std::filesystem::path& path, int* h, int* w);
void write_label_png(const std::filesystem::path& path, const LabelMap& label);
LabelMap read_label_png(const std::filesystem::path& path, int num_classes,
                        int ignore_index = kDefaultIgnoreIndex);
void write_mask_png(const std::filesystem::path& path, const Mask& mask, int h, int w);
Mask read_mask_png(const std::filesystem::path& path, int* h, int* w);
/// 16-bit grayscale dump of a [0,1] map (debug output).
void write_unit_map_png16(const std::filesystem::path& path, const float* values, int h, int w);

/// (1,3,H,W) tensor of (rgb/255 - mean)/std.
Tensor normalize_rgb(const std::vector<std::uint8_t>& rgb, int h, int w, const Normalization& n);

struct ClipEntry {
  std::string id;
  std::string split;
  int frames = 0;
};

struct Manifest {
  int num_classes = 0;
  int ignore_index = kDefaultIgnoreIndex;
  int height = 0;
  int width = 0;
  int annotated_index = -1;
  Normalization normalization;
  std::vector<ClipEntry> clips;
  nlohmann::json raw;

  std::vector<std::string> split(const std::string& name) const;
  static Manifest load(const std::filesystem::path& root);
};

/// Half-open frame range [begin, end).
struct FrameRange {
  int begin = 0;
  int end = 0;
};

/// Loads one clip directory. Every frame in the range must exist; labels,
/// flows and occlusion masks are attached when present.
VideoClip load_clip(const std::filesystem::path& clip_dir, const Normalization& norm,
                    int num_classes, std::optional<FrameRange> range = std::nullopt,
                    int ignore_index = kDefaultIgnoreIndex);

/// Loads every clip of a split listed in the manifest.
std::vector<VideoClip> load_split(const std::filesystem::path& root, const Manifest& manifest,
                                  const std::string& split, int jobs = 1);

}  // namespace flowseg::data

#pragma once

// Deterministic synthetic video: textured ellipses and polygons translating
// over a textured background, behind a static occluder strip. Rendering is
// analytic, so labels, flow and occlusion are exact.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowseg/data/types.hpp"

namespace flowseg::data {

struct SynthSpec {
  std::uint64_t seed = 7;
  int num_clips = 50;
  int val_clips = 10;
  int frames_per_clip = 30;
  int height = 64;
  int width = 64;
  int num_classes = 4;
  int min_shapes = 2;
  int max_shapes = 4;
  double min_radius = 6.0;
  double max_radius = 13.0;
  double min_speed = 0.5;
  /// Per-axis velocity bound in pixels/frame.
  double max_velocity = 2.5;
  /// Background pan bound in pixels/frame (0 keeps the background static).
  double max_pan = 0.0;
  double texture_amplitude = 0.12;
  double color_jitter = 0.06;
  bool occluder = true;
  int occluder_min_width = 5;
  int occluder_max_width = 9;
  int annotated_index = 19;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

struct Vec2 {
  double x = 0;
  double y = 0;
};

enum class ShapeKind { kBackground, kEllipse, kPolygon, kStrip };

/// One depth layer of a scene. Positions are per-frame translations of the
/// layer's local frame; appearance is a function of local coordinates.
struct SceneLayer {
  ShapeKind kind = ShapeKind::kBackground;
  int class_id = 0;
  std::vector<Vec2> positions;
  // ellipse
  double rx = 0, ry = 0, angle = 0;
  // polygon (star-convex, vertices in local coordinates)
  std::vector<Vec2> vertices;
  // strip: vertical when true, spans [lo, hi) along the other axis
  bool vertical = true;
  double lo = 0, hi = 0;
  // texture
  std::array<double, 3> color{};
  std::array<double, 3> gain{};
  Vec2 k1, k2;
  double phase1 = 0, phase2 = 0;

  bool contains(double lx, double ly) const;
  std::array<double, 3> shade(double lx, double ly, double amplitude) const;
};

/// Layers ordered back to front.
struct Scene {
  int height = 0;
  int width = 0;
  int frames = 0;
  std::vector<SceneLayer> layers;

  /// Index of the front-most layer covering continuous point (x, y) at frame t.
  int visible_layer(int t, double x, double y) const;
};

struct RenderedClip {
  std::string clip_id;
  int height = 0;
  int width = 0;
  /// 8-bit RGB, row-major interleaved, one per frame.
  std::vector<std::vector<std::uint8_t>> frames;
  std::vector<LabelMap> labels;
  /// flows[t]: (1,2,H,W) displacement from frame t+1 pixels into frame t.
  std::vector<Tensor> flows;
  std::vector<Mask> occlusion;
};

Scene make_scene(const SynthSpec& spec, int clip_index);
RenderedClip render_scene(const Scene& scene, const SynthSpec& spec, const std::string& clip_id);
std::string clip_name(int clip_index);

/// Writes clips and manifest.json under `out`. Refuses a non-empty directory
/// unless `force`. Returns the manifest.
nlohmann::json generate_synthetic_dataset(const SynthSpec& spec,
                                          const std::filesystem::path& out, bool force = false,
                                          int jobs = 1);

}  // namespace flowseg::data

#include "flowseg/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "flowseg/data/io.hpp"
#include "flowseg/error.hpp"

namespace fs = std::filesystem;

namespace flowseg::data {

namespace {

constexpr std::array<std::array<double, 3>, 4> kBaseColors{{
    {0.45, 0.55, 0.40},  // background
    {0.80, 0.30, 0.25},  // odd shape classes
    {0.25, 0.35, 0.80},  // even shape classes
    {0.85, 0.75, 0.30},  // occluder strip
}};

std::mt19937_64 clip_rng(std::uint64_t seed, int clip_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(clip_index), 0x5eedu};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Triangle-wave reflection of x into [lo, hi].
double bounce(double x, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0) return lo;
  double r = std::fmod(x - lo, 2 * span);
  if (r < 0) r += 2 * span;
  return r <= span ? lo + r : lo + 2 * span - r;
}

void texture(SceneLayer& layer, std::mt19937_64& rng, double jitter, int palette) {
  for (int c = 0; c < 3; ++c) {
    layer.color[c] = std::clamp(kBaseColors[palette][c] + uniform(rng, -jitter, jitter), 0.05, 0.95);
    layer.gain[c] = uniform(rng, 0.5, 1.0);
  }
  const auto wave = [&] {
    const double wavelength = uniform(rng, 8.0, 16.0);
    const double dir = uniform(rng, 0.0, std::numbers::pi);
    const double k = 2 * std::numbers::pi / wavelength;
    return Vec2{k * std::cos(dir), k * std::sin(dir)};
  };
  layer.k1 = wave();
  layer.k2 = wave();
  layer.phase1 = uniform(rng, 0.0, 2 * std::numbers::pi);
  layer.phase2 = uniform(rng, 0.0, 2 * std::numbers::pi);
}

}  // namespace

// ------------------------------------------------------------- SynthSpec

void SynthSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("synth: " + m); };
  if (num_clips < 1) fail("num_clips must be >= 1");
  if (val_clips < 0 || val_clips > num_clips) fail("val_clips must lie in [0, num_clips]");
  if (frames_per_clip < 10) fail("frames_per_clip must be >= 10");
  if (height < 8 || width < 8) fail("height and width must be >= 8");
  if (num_classes < (occluder ? 3 : 2) || num_classes > 254) {
    fail("num_classes must cover background, one shape class and the occluder");
  }
  if (min_shapes < 0 || max_shapes < min_shapes) fail("shape count range is empty");
  if (!(min_radius > 0) || max_radius < min_radius) fail("radius range is invalid");
  if (max_velocity < 0 || min_speed < 0 || min_speed > max_velocity) {
    fail("need 0 <= min_speed <= max_velocity");
  }
  if (max_pan < 0) fail("max_pan must be >= 0");
  if (texture_amplitude < 0 || texture_amplitude > 0.5) fail("texture_amplitude must lie in [0, 0.5]");
  if (color_jitter < 0 || color_jitter > 0.3) fail("color_jitter must lie in [0, 0.3]");
  if (occluder && (occluder_min_width < 1 || occluder_max_width < occluder_min_width)) {
    fail("occluder width range is invalid");
  }
  if (annotated_index < 0 || annotated_index >= frames_per_clip) {
    fail("annotated_index must be a valid frame index");
  }
}

nlohmann::json SynthSpec::to_json() const {
  return {{"seed", seed},
          {"num_clips", num_clips},
          {"val_clips", val_clips},
          {"frames_per_clip", frames_per_clip},
          {"height", height},
          {"width", width},
          {"num_classes", num_classes},
          {"min_shapes", min_shapes},
          {"max_shapes", max_shapes},
          {"min_radius", min_radius},
          {"max_radius", max_radius},
          {"min_speed", min_speed},
          {"max_velocity", max_velocity},
          {"max_pan", max_pan},
          {"texture_amplitude", texture_amplitude},
          {"color_jitter", color_jitter},
          {"occluder", occluder},
          {"occluder_min_width", occluder_min_width},
          {"occluder_max_width", occluder_max_width},
          {"annotated_index", annotated_index}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  if (!j.is_object()) throw ConfigError("synth: expected an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "seed") s.seed = v.get<std::uint64_t>();
      else if (key == "num_clips") s.num_clips = v.get<int>();
      else if (key == "val_clips") s.val_clips = v.get<int>();
      else if (key == "frames_per_clip") s.frames_per_clip = v.get<int>();
      else if (key == "height") s.height = v.get<int>();
      else if (key == "width") s.width = v.get<int>();
      else if (key == "num_classes") s.num_classes = v.get<int>();
      else if (key == "min_shapes") s.min_shapes = v.get<int>();
      else if (key == "max_shapes") s.max_shapes = v.get<int>();
      else if (key == "min_radius") s.min_radius = v.get<double>();
      else if (key == "max_radius") s.max_radius = v.get<double>();
      else if (key == "min_speed") s.min_speed = v.get<double>();
      else if (key == "max_velocity") s.max_velocity = v.get<double>();
      else if (key == "max_pan") s.max_pan = v.get<double>();
      else if (key == "texture_amplitude") s.texture_amplitude = v.get<double>();
      else if (key == "color_jitter") s.color_jitter = v.get<double>();
      else if (key == "occluder") s.occluder = v.get<bool>();
      else if (key == "occluder_min_width") s.occluder_min_width = v.get<int>();
      else if (key == "occluder_max_width") s.occluder_max_width = v.get<int>();
      else if (key == "annotated_index") s.annotated_index = v.get<int>();
      else throw ConfigError("unknown key synth." + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  s.validate();
  return s;
}

// ------------------------------------------------------------ geometry

bool SceneLayer::contains(double lx, double ly) const {
  switch (kind) {
    case ShapeKind::kBackground:
      return true;
    case ShapeKind::kEllipse: {
      const double c = std::cos(angle), s = std::sin(angle);
      const double u = (c * lx + s * ly) / rx;
      const double v = (-s * lx + c * ly) / ry;
      return u * u + v * v <= 1.0;
    }
    case ShapeKind::kPolygon: {
      bool inside = false;
      const std::size_t n = vertices.size();
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = vertices[i];
        const Vec2& b = vertices[j];
        if ((a.y > ly) != (b.y > ly) && lx < (b.x - a.x) * (ly - a.y) / (b.y - a.y) + a.x) {
          inside = !inside;
        }
      }
      return inside;
    }
    case ShapeKind::kStrip: {
      const double along = vertical ? lx : ly;
      return along >= lo && along < hi;
    }
  }
  return false;
}

std::array<double, 3> SceneLayer::shade(double lx, double ly, double amplitude) const {
  const double wave = 0.6 * std::sin(k1.x * lx + k1.y * ly + phase1) +
                      0.4 * std::sin(k2.x * lx + k2.y * ly + phase2);
  std::array<double, 3> rgb{};
  for (int c = 0; c < 3; ++c) rgb[c] = std::clamp(color[c] + amplitude * gain[c] * wave, 0.0, 1.0);
  return rgb;
}

int Scene::visible_layer(int t, double x, double y) const {
  for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i) {
    const SceneLayer& l = layers[i];
    const Vec2& p = l.positions[t];
    if (l.contains(x - p.x, y - p.y)) return i;
  }
  return 0;
}

// --------------------------------------------------------------- scenes

std::string clip_name(int clip_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%04d", clip_index);
  return buf;
}

Scene make_scene(const SynthSpec& spec, int clip_index) {
  spec.validate();
  auto rng = clip_rng(spec.seed, clip_index);
  Scene scene;
  scene.height = spec.height;
  scene.width = spec.width;
  scene.frames = spec.frames_per_clip;
  const int T = spec.frames_per_clip;

  SceneLayer bg;
  bg.kind = ShapeKind::kBackground;
  bg.class_id = 0;
  texture(bg, rng, spec.color_jitter, 0);
  const Vec2 pan{uniform(rng, -spec.max_pan, spec.max_pan), uniform(rng, -spec.max_pan, spec.max_pan)};
  for (int t = 0; t < T; ++t) bg.positions.push_back({pan.x * t, pan.y * t});
  scene.layers.push_back(std::move(bg));

  const int shape_classes = spec.num_classes - (spec.occluder ? 2 : 1);
  const int count = uniform_int(rng, spec.min_shapes, spec.max_shapes);
  for (int i = 0; i < count; ++i) {
    SceneLayer s;
    s.class_id = 1 + uniform_int(rng, 0, shape_classes - 1);
    const double radius = uniform(rng, spec.min_radius, spec.max_radius);
    if (s.class_id % 2 == 1) {
      s.kind = ShapeKind::kEllipse;
      s.rx = radius;
      s.ry = radius * uniform(rng, 0.55, 1.0);
      s.angle = uniform(rng, 0.0, std::numbers::pi);
    } else {
      s.kind = ShapeKind::kPolygon;
      const int n = uniform_int(rng, 5, 8);
      const double offset = uniform(rng, 0.0, 2 * std::numbers::pi);
      for (int k = 0; k < n; ++k) {
        const double a = offset + 2 * std::numbers::pi * (k + uniform(rng, -0.25, 0.25)) / n;
        const double r = radius * uniform(rng, 0.6, 1.0);
        s.vertices.push_back({r * std::cos(a), r * std::sin(a)});
      }
    }
    texture(s, rng, spec.color_jitter, s.class_id % 2 == 1 ? 1 : 2);

    Vec2 v{};
    if (spec.max_velocity > 0) {
      do {
        v = {uniform(rng, -spec.max_velocity, spec.max_velocity),
             uniform(rng, -spec.max_velocity, spec.max_velocity)};
      } while (std::hypot(v.x, v.y) < spec.min_speed);
    }
    // Centres stay inside the frame, so shapes never leave for good.
    const double margin = 0.25 * radius;
    const Vec2 p0{uniform(rng, margin, spec.width - 1 - margin),
                  uniform(rng, margin, spec.height - 1 - margin)};
    for (int t = 0; t < T; ++t) {
      s.positions.push_back({bounce(p0.x + v.x * t, margin, spec.width - 1 - margin),
                             bounce(p0.y + v.y * t, margin, spec.height - 1 - margin)});
    }
    scene.layers.push_back(std::move(s));
  }

  if (spec.occluder) {
    SceneLayer strip;
    strip.kind = ShapeKind::kStrip;
    strip.class_id = spec.num_classes - 1;
    strip.vertical = uniform_int(rng, 0, 1) == 1;
    const int extent = strip.vertical ? spec.width : spec.height;
    const int w = uniform_int(rng, spec.occluder_min_width, spec.occluder_max_width);
    const int start = uniform_int(rng, extent / 4, std::max(extent / 4, 3 * extent / 4 - w));
    strip.lo = start;
    strip.hi = start + w;
    texture(strip, rng, spec.color_jitter, 3);
    strip.positions.assign(T, Vec2{});
    scene.layers.push_back(std::move(strip));
  }
  return scene;
}

RenderedClip render_scene(const Scene& scene, const SynthSpec& spec, const std::string& clip_id) {
  const int H = scene.height, W = scene.width, T = scene.frames;
  RenderedClip out;
  out.clip_id = clip_id;
  out.height = H;
  out.width = W;
  std::vector<std::vector<int>> owner(T, std::vector<int>(static_cast<std::size_t>(H) * W));

  for (int t = 0; t < T; ++t) {
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(H) * W * 3);
    LabelMap label(H, W, spec.num_classes);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const int li = scene.visible_layer(t, x, y);
        const SceneLayer& l = scene.layers[li];
        const auto c = l.shade(x - l.positions[t].x, y - l.positions[t].y, spec.texture_amplitude);
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        for (int k = 0; k < 3; ++k) {
          rgb[3 * i + k] = static_cast<std::uint8_t>(std::lround(c[k] * 255.0));
        }
        label.values[i] = static_cast<std::uint8_t>(l.class_id);
        owner[t][i] = li;
      }
    }
    out.frames.push_back(std::move(rgb));
    out.labels.push_back(std::move(label));
  }

  for (int t = 0; t + 1 < T; ++t) {
    Tensor flow(1, 2, H, W);
    Mask occ(static_cast<std::size_t>(H) * W, 0);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        const int li = owner[t + 1][i];
        const SceneLayer& l = scene.layers[li];
        const double u = l.positions[t].x - l.positions[t + 1].x;
        const double v = l.positions[t].y - l.positions[t + 1].y;
        flow.at(0, 0, y, x) = static_cast<float>(u);
        flow.at(0, 1, y, x) = static_cast<float>(v);
        const double qx = x + u, qy = y + v;
        const bool outside = qx < 0 || qy < 0 || qx > W - 1 || qy > H - 1;
        occ[i] = outside || scene.visible_layer(t, qx, qy) != li;
      }
    }
    out.flows.push_back(std::move(flow));
    out.occlusion.push_back(std::move(occ));
  }
  return out;
}

// -------------------------------------------------------------- dataset

nlohmann::json generate_synthetic_dataset(const SynthSpec& spec, const fs::path& out, bool force,
                                          int jobs) {
  spec.validate();
  std::error_code ec;
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) {
      throw ConfigError("output directory " + out.string() + " is not empty (use --force)");
    }
    fs::remove_all(out / "clips", ec);
    fs::remove(out / "manifest.json", ec);
  }
  fs::create_directories(out / "clips", ec);
  if (ec) throw std::runtime_error("cannot create " + (out / "clips").string() + ": " + ec.message());

  std::vector<std::string> errors(spec.num_clips);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (int c = 0; c < spec.num_clips; ++c) {
    try {
      const std::string id = clip_name(c);
      const RenderedClip clip = render_scene(make_scene(spec, c), spec, id);
      const fs::path dir = out / "clips" / id;
      for (const char* sub : {"frames", "labels", "flows", "occlusion"}) {
        fs::create_directories(dir / sub);
      }
      for (int t = 0; t < spec.frames_per_clip; ++t) {
        write_rgb_png(dir / "frames" / frame_file(t, "png"), clip.frames[t], clip.height, clip.width);
        write_label_png(dir / "labels" / frame_file(t, "png"), clip.labels[t]);
        if (t + 1 < spec.frames_per_clip) {
          write_flo(dir / "flows" / frame_file(t, "flo"), clip.flows[t]);
          write_mask_png(dir / "occlusion" / frame_file(t, "png"), clip.occlusion[t], clip.height,
                         clip.width);
        }
      }
    } catch (const std::exception& e) {
      errors[c] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }

  nlohmann::json manifest;
  manifest["num_classes"] = spec.num_classes;
  manifest["ignore_index"] = kDefaultIgnoreIndex;
  manifest["normalization"] = Normalization{}.to_json();
  manifest["height"] = spec.height;
  manifest["width"] = spec.width;
  manifest["frames_per_clip"] = spec.frames_per_clip;
  manifest["annotated_index"] = spec.annotated_index;
  manifest["synth_spec"] = spec.to_json();
  nlohmann::json clips = nlohmann::json::array();
  for (int c = 0; c < spec.num_clips; ++c) {
    clips.push_back({{"id", clip_name(c)},
                     {"split", c < spec.num_clips - spec.val_clips ? "train" : "val"},
                     {"frames", spec.frames_per_clip}});
  }
  manifest["clips"] = clips;
  std::ofstream f(out / "manifest.json");
  if (!f) throw std::runtime_error("cannot write " + (out / "manifest.json").string());
  f << manifest.dump(2) << '\n';
  return manifest;
}

}  // namespace flowseg::data

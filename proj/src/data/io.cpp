#include "flowseg/data/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <opencv2/imgcodecs.hpp>

#include "flowseg/error.hpp"

namespace fs = std::filesystem;

namespace flowseg::data {

std::string frame_file(int index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.%s", index, ext);
  return buf;
}

// ------------------------------------------------------------------ .flo

void write_flo(const fs::path& path, const Tensor& flow) {
  if (flow.n() != 1 || flow.c() != 2) throw std::invalid_argument("write_flo: expects (1,2,H,W)");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  const float magic = kFloMagic;
  const std::int32_t w = flow.w(), h = flow.h();
  f.write(reinterpret_cast<const char*>(&magic), 4);
  f.write(reinterpret_cast<const char*>(&w), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  std::vector<float> row(2 * static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      row[2 * x] = flow.at(0, 0, y, x);
      row[2 * x + 1] = flow.at(0, 1, y, x);
    }
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("short write " + path.string());
}

Tensor read_flo(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("missing flow file " + path.string());
  float magic = 0;
  std::int32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&magic), 4);
  f.read(reinterpret_cast<char*>(&w), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  if (!f || magic != kFloMagic) throw DataError(path.string() + ": bad .flo header");
  if (w <= 0 || h <= 0 || w > 1 << 15 || h > 1 << 15) {
    throw DataError(path.string() + ": implausible .flo extent");
  }
  Tensor flow(1, 2, h, w);
  std::vector<float> row(2 * static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!f) throw DataError(path.string() + ": truncated .flo payload");
    for (int x = 0; x < w; ++x) {
      flow.at(0, 0, y, x) = row[2 * x];
      flow.at(0, 1, y, x) = row[2 * x + 1];
    }
  }
  return flow;
}

// ------------------------------------------------------------------ PNG

namespace {

void imwrite_checked(const fs::path& path, const cv::Mat& m) {
  if (!cv::imwrite(path.string(), m)) throw std::runtime_error("cannot write " + path.string());
}

cv::Mat imread_checked(const fs::path& path, int flags) {
  if (!fs::exists(path)) throw DataError("missing file " + path.string());
  cv::Mat m = cv::imread(path.string(), flags);
  if (m.empty()) throw DataError("unreadable image " + path.string());
  return m;
}

}  // namespace

void write_rgb_png(const fs::path& path, const std::vector<std::uint8_t>& rgb, int h, int w) {
  cv::Mat m(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < w; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
      row[3 * x + 0] = rgb[i + 2];
      row[3 * x + 1] = rgb[i + 1];
      row[3 * x + 2] = rgb[i + 0];
    }
  }
  imwrite_checked(path, m);
}

std::vector<std::uint8_t> read_rgb_png(const fs::path& path, int* h, int* w) {
  cv::Mat m = imread_checked(path, cv::IMREAD_COLOR);
  *h = m.rows;
  *w = m.cols;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(m.rows) * m.cols * 3);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * m.cols + x) * 3;
      rgb[i + 0] = row[3 * x + 2];
      rgb[i + 1] = row[3 * x + 1];
      rgb[i + 2] = row[3 * x + 0];
    }
  }
  return rgb;
}

void write_label_png(const fs::path& path, const LabelMap& label) {
  cv::Mat m(label.height, label.width, CV_8UC1,
            const_cast<std::uint8_t*>(label.values.data()));
  imwrite_checked(path, m);
}

LabelMap read_label_png(const fs::path& path, int num_classes, int ignore_index) {
  cv::Mat m = imread_checked(path, cv::IMREAD_UNCHANGED);
  if (m.type() != CV_8UC1) throw DataError(path.string() + ": labels must be 8-bit single channel");
  LabelMap label(m.rows, m.cols, num_classes, ignore_index);
  for (int y = 0; y < m.rows; ++y) {
    std::memcpy(&label.values[static_cast<std::size_t>(y) * m.cols], m.ptr<std::uint8_t>(y),
                static_cast<std::size_t>(m.cols));
  }
  label.validate();
  return label;
}

void write_mask_png(const fs::path& path, const Mask& mask, int h, int w) {
  cv::Mat m(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) m.at<std::uint8_t>(y, x) = mask[y * w + x] ? 255 : 0;
  }
  imwrite_checked(path, m);
}

Mask read_mask_png(const fs::path& path, int* h, int* w) {
  cv::Mat m = imread_checked(path, cv::IMREAD_GRAYSCALE);
  *h = m.rows;
  *w = m.cols;
  Mask mask(static_cast<std::size_t>(m.rows) * m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) mask[y * m.cols + x] = m.at<std::uint8_t>(y, x) > 127;
  }
  return mask;
}

void write_unit_map_png16(const fs::path& path, const float* values, int h, int w) {
  cv::Mat m(h, w, CV_16UC1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = std::clamp(values[y * w + x], 0.0f, 1.0f);
      m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(std::lround(v * 65535.0f));
    }
  }
  imwrite_checked(path, m);
}

Tensor normalize_rgb(const std::vector<std::uint8_t>& rgb, int h, int w, const Normalization& n) {
  Tensor t(1, 3, h, w);
  for (int c = 0; c < 3; ++c) {
    const float inv = 1.0f / n.std[c];
    float* p = t.plane(0, c);
    for (int i = 0; i < h * w; ++i) {
      p[i] = (static_cast<float>(rgb[static_cast<std::size_t>(i) * 3 + c]) / 255.0f - n.mean[c]) * inv;
    }
  }
  return t;
}

// ------------------------------------------------------------- manifest

std::vector<std::string> Manifest::split(const std::string& name) const {
  std::vector<std::string> ids;
  for (const auto& c : clips) {
    if (c.split == name) ids.push_back(c.id);
  }
  return ids;
}

Manifest Manifest::load(const fs::path& root) {
  const fs::path file = root / "manifest.json";
  std::ifstream f(file);
  if (!f) throw DataError("missing dataset manifest " + file.string());
  Manifest m;
  try {
    m.raw = nlohmann::json::parse(f);
    m.num_classes = m.raw.at("num_classes").get<int>();
    m.ignore_index = m.raw.value("ignore_index", kDefaultIgnoreIndex);
    m.height = m.raw.at("height").get<int>();
    m.width = m.raw.at("width").get<int>();
    m.annotated_index = m.raw.value("annotated_index", -1);
    m.normalization = Normalization::from_json(m.raw.at("normalization"));
    for (const auto& c : m.raw.at("clips")) {
      m.clips.push_back({c.at("id").get<std::string>(), c.at("split").get<std::string>(),
                         c.at("frames").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(file.string() + ": " + e.what());
  }
  return m;
}

// ------------------------------------------------------------ clip load

VideoClip load_clip(const fs::path& clip_dir, const Normalization& norm, int num_classes,
                    std::optional<FrameRange> range, int ignore_index) {
  const fs::path frames_dir = clip_dir / "frames";
  if (!fs::is_directory(frames_dir)) throw DataError("missing frames directory " + frames_dir.string());

  int begin = 0, end = 0;
  if (range) {
    begin = range->begin;
    end = range->end;
    if (begin < 0 || end <= begin) throw DataError("invalid frame range");
  } else {
    int count = 0;
    for (const auto& entry : fs::directory_iterator(frames_dir)) {
      if (entry.path().extension() == ".png") ++count;
    }
    end = count;
  }

  VideoClip clip;
  clip.clip_id = clip_dir.filename().string();
  clip.first_index = begin;
  for (int t = begin; t < end; ++t) {
    const fs::path p = frames_dir / frame_file(t, "png");
    if (!fs::exists(p)) throw DataError("missing frame " + p.string());
    int h = 0, w = 0;
    auto rgb = read_rgb_png(p, &h, &w);
    clip.frames.push_back(normalize_rgb(rgb, h, w, norm));
  }

  for (int t = begin; t < end; ++t) {
    const int local = t - begin;
    const fs::path lp = clip_dir / "labels" / frame_file(t, "png");
    if (fs::exists(lp)) clip.labels[local] = read_label_png(lp, num_classes, ignore_index);
    if (t + 1 < end) {
      const fs::path fp = clip_dir / "flows" / frame_file(t, "flo");
      if (fs::exists(fp)) clip.gt_flows[local] = read_flo(fp);
      const fs::path op = clip_dir / "occlusion" / frame_file(t, "png");
      if (fs::exists(op)) {
        int h = 0, w = 0;
        clip.occlusion[local] = read_mask_png(op, &h, &w);
        if (h != clip.height() || w != clip.width()) {
          throw DataError(op.string() + ": occlusion/frame size mismatch");
        }
      }
    }
  }
  // A partial flow set (some pairs missing) is an integrity error.
  if (!clip.gt_flows.empty() && static_cast<int>(clip.gt_flows.size()) != clip.size() - 1) {
    throw DataError(clip.clip_id + ": flows present for only some frame pairs");
  }
  clip.validate();
  return clip;
}

std::vector<VideoClip> load_split(const fs::path& root, const Manifest& manifest,
                                  const std::string& split, int jobs) {
  const auto ids = manifest.split(split);
  std::vector<VideoClip> clips(ids.size());
  std::vector<std::string> errors(ids.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (int i = 0; i < static_cast<int>(ids.size()); ++i) {
    try {
      clips[i] = load_clip(root / "clips" / ids[i], manifest.normalization, manifest.num_classes,
                           std::nullopt, manifest.ignore_index);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DataError(e);
  }
  return clips;
}

}  // namespace flowseg::data

#include "flowseg/evaluation/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "flowseg/error.hpp"

namespace flowseg::evaluation {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes),
      m_(static_cast<std::size_t>(num_classes) * num_classes, 0),
      fn_extra_(num_classes, 0) {}

void ConfusionMatrix::add(const data::LabelMap& pred, const data::LabelMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw std::invalid_argument("confusion matrix: prediction/label size mismatch");
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.ignored(i)) continue;
    const int g = gt.values[i];
    const int p = pred.values[i];
    if (g >= k_) throw std::invalid_argument("confusion matrix: label outside the class range");
    if (p >= 0 && p < k_) {
      ++m_[static_cast<std::size_t>(g) * k_ + p];
    } else {
      ++fn_extra_[g];
    }
    ++total_;
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& o) {
  if (o.k_ != k_) throw std::invalid_argument("confusion matrix: class count mismatch");
  for (std::size_t i = 0; i < m_.size(); ++i) m_[i] += o.m_[i];
  for (int c = 0; c < k_; ++c) fn_extra_[c] += o.fn_extra_[c];
  total_ += o.total_;
}

MiouResult miou(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("miou: no valid pixels");
  const int k = cm.num_classes();
  MiouResult r;
  r.per_class.assign(k, std::numeric_limits<double>::quiet_NaN());
  double sum = 0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    const std::int64_t tp = cm.at(c, c);
    std::int64_t fp = 0, fn = cm.extra_false_negatives(c);
    for (int o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const std::int64_t denom = tp + fp + fn;
    if (denom == 0) continue;
    r.per_class[c] = static_cast<double>(tp) / static_cast<double>(denom);
    sum += r.per_class[c];
    ++present;
  }
  r.mean = sum / present;
  return r;
}

MiouResult miou(const std::vector<const data::LabelMap*>& preds,
                const std::vector<const data::LabelMap*>& gts, int num_classes) {
  if (preds.empty() || preds.size() != gts.size()) {
    throw std::invalid_argument("miou: empty or mismatched inputs");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(*preds[i], *gts[i]);
  return miou(cm);
}

void CostModel::validate() const {
  if (!(c_seg > 0) || !(c_warp > 0)) throw std::invalid_argument("cost model: costs must be positive");
}

double mean_cost(double c_seg, double c_warp, int distance) {
  if (distance < 0) throw std::invalid_argument("mean_cost: negative propagation distance");
  return (c_seg + c_warp * distance) / (distance + 1);
}

double mean_cost(const CostModel& model, int distance) {
  return mean_cost(model.c_seg, model.c_warp, distance);
}

CurveSeries pda_curve(const std::string& label, const std::map<int, MiouResult>& runs, int d_min,
                      int d_max) {
  std::vector<int> missing;
  for (int d = d_min; d <= d_max; ++d) {
    if (!runs.count(d)) missing.push_back(d);
  }
  if (!missing.empty()) {
    std::string list;
    for (int d : missing) list += (list.empty() ? "" : ", ") + std::to_string(d);
    throw PrerequisiteError("pda: missing runs for propagation distance(s) " + list);
  }
  CurveSeries s;
  s.label = label;
  for (int d = d_min; d <= d_max; ++d) {
    s.points.push_back({static_cast<double>(d), runs.at(d).mean});
    s.per_class.push_back(runs.at(d).per_class);
  }
  return s;
}

CurveSeries cca_curve(const CurveSeries& pda, const CostModel& model) {
  model.validate();
  CurveSeries s;
  s.label = pda.label;
  for (const auto& p : pda.points) {
    s.points.push_back({mean_cost(model, static_cast<int>(p.x)) / 1e9, p.y});
  }
  return s;
}

double FalseCorrectionStats::ratio() const {
  if (right_rectified == 0) {
    return wrong_rectified == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return static_cast<double>(wrong_rectified) / static_cast<double>(right_rectified);
}

std::string FalseCorrectionStats::ratio_text() const {
  if (undefined()) return std::to_string(wrong_rectified) + "/0";
  std::ostringstream os;
  os << ratio();
  return os.str();
}

void FalseCorrectionStats::merge(const FalseCorrectionStats& o) {
  wrong_rectified += o.wrong_rectified;
  right_rectified += o.right_rectified;
  unchanged_correct += o.unchanged_correct;
  unchanged_wrong += o.unchanged_wrong;
}

FalseCorrectionStats false_correction_stats(const data::LabelMap& seg_p, const data::LabelMap& seg_c,
                                            const data::LabelMap& gt) {
  if (seg_p.height != gt.height || seg_p.width != gt.width || seg_c.height != gt.height ||
      seg_c.width != gt.width) {
    throw std::invalid_argument("false_correction_stats: shape mismatch");
  }
  FalseCorrectionStats s;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.ignored(i)) continue;
    const bool p_ok = seg_p.values[i] == gt.values[i];
    const bool c_ok = seg_c.values[i] == gt.values[i];
    if (p_ok && !c_ok) ++s.wrong_rectified;
    else if (!p_ok && c_ok) ++s.right_rectified;
    else if (p_ok) ++s.unchanged_correct;
    else ++s.unchanged_wrong;
  }
  return s;
}

// ------------------------------------------------------------- reports

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.precision(10);
  return f;
}

}  // namespace

void write_pda_csv(const std::filesystem::path& path, const CurveSeries& pda) {
  auto f = open_out(path);
  f << "distance,miou";
  const std::size_t k = pda.per_class.empty() ? 0 : pda.per_class.front().size();
  for (std::size_t c = 0; c < k; ++c) f << ",iou_class_" << c;
  f << '\n';
  for (std::size_t i = 0; i < pda.points.size(); ++i) {
    f << static_cast<int>(pda.points[i].x) << ',' << pda.points[i].y;
    if (i < pda.per_class.size()) {
      for (double v : pda.per_class[i]) {
        f << ',';
        if (!std::isnan(v)) f << v;
      }
    }
    f << '\n';
  }
}

void write_cca_csv(const std::filesystem::path& path, const CurveSeries& pda,
                   const CurveSeries& cca) {
  auto f = open_out(path);
  f << "distance,mean_gflops,miou\n";
  for (std::size_t i = 0; i < cca.points.size(); ++i) {
    f << static_cast<int>(pda.points[i].x) << ',' << cca.points[i].x << ',' << cca.points[i].y
      << '\n';
  }
}

void write_false_correction_csv(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, FalseCorrectionStats>>& rows) {
  auto f = open_out(path);
  f << "method,wrong_rectified,right_rectified,unchanged_correct,unchanged_wrong,ratio,flag\n";
  for (const auto& [name, s] : rows) {
    const char* flag = s.no_change() ? "no-change" : (s.undefined() ? "zero-denominator" : "");
    f << name << ',' << s.wrong_rectified << ',' << s.right_rectified << ','
      << s.unchanged_correct << ',' << s.unchanged_wrong << ',' << s.ratio_text() << ',' << flag
      << '\n';
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto f = open_out(path);
  f << j.dump(2) << '\n';
}

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<ChartSeries>& series) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  const double W = 640, H = 420, ml = 70, mr = 160, mt = 40, mb = 55;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  const double pad = std::max(1e-3, 0.08 * (y1 - y0));
  y0 -= pad;
  y1 += pad;
  auto sx = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto sy = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };

  std::ostringstream os;
  os.precision(5);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
     << "</text>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5, yv = y0 + (y1 - y0) * i / 5;
    os << "<text x=\"" << sx(xv) << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"middle\">" << xv
       << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << yv
       << "</text>\n";
  }
  os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
     << x_label << "</text>\n";
  os << "<text transform=\"translate(18," << (mt + H - mb) / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : series[k].points) os << sx(p.x) << ',' << sy(p.y) << ' ';
    os << "\"/>\n";
    for (const auto& p : series[k].points) {
      os << "<circle cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.y) << "\" r=\"3\" fill=\"" << color
         << "\"/>\n";
    }
    const double ly = mt + 18 * k + 10;
    os << "<line x1=\"" << W - mr + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - mr + 32
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - mr + 38 << "\" y=\"" << ly + 4 << "\">" << series[k].label
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace flowseg::evaluation

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowseg/data/types.hpp"
#include "flowseg/networks/flops.hpp"

namespace flowseg::evaluation {

/// Dataset-wide confusion matrix, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = 0);

  /// Counts non-ignored pixels. Predictions outside [0, K) count as errors
  /// against the ground-truth class only.
  void add(const data::LabelMap& pred, const data::LabelMap& gt);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return k_; }
  std::int64_t at(int gt, int pred) const { return m_[static_cast<std::size_t>(gt) * k_ + pred]; }
  std::int64_t total() const { return total_; }
  std::int64_t extra_false_negatives(int c) const { return fn_extra_[c]; }

 private:
  int k_;
  std::vector<std::int64_t> m_;
  std::vector<std::int64_t> fn_extra_;
  std::int64_t total_ = 0;
};

struct MiouResult {
  double mean = 0;
  /// NaN for classes absent from both prediction and ground truth.
  std::vector<double> per_class;
};

/// IoU = TP / (TP + FP + FN) per class; absent classes are excluded from the
/// mean. Throws when no pixel was counted.
MiouResult miou(const ConfusionMatrix& cm);
MiouResult miou(const std::vector<const data::LabelMap*>& preds,
                const std::vector<const data::LabelMap*>& gts, int num_classes);

struct CostModel {
  double c_seg = 0;
  double c_warp = 0;
  int input_h = 0;
  int input_w = 0;
  nlohmann::json breakdown;

  void validate() const;
};

/// (C_seg + C_warp * D_P) / (D_P + 1).
double mean_cost(const CostModel& model, int distance);
double mean_cost(double c_seg, double c_warp, int distance);

struct CurvePoint {
  double x = 0;
  double y = 0;
};

struct CurveSeries {
  std::string label;
  std::vector<CurvePoint> points;
  /// Optional per-class values aligned with points.
  std::vector<std::vector<double>> per_class;
};

/// Points (d, mIoU(d)) for d = d_min..d_max; throws listing any missing distance.
CurveSeries pda_curve(const std::string& label, const std::map<int, MiouResult>& runs, int d_min,
                      int d_max);
/// Same y-values at x = mean_cost(D_P) in GFLOPs.
CurveSeries cca_curve(const CurveSeries& pda, const CostModel& model);

struct FalseCorrectionStats {
  std::int64_t wrong_rectified = 0;
  std::int64_t right_rectified = 0;
  std::int64_t unchanged_correct = 0;
  std::int64_t unchanged_wrong = 0;

  std::int64_t valid() const {
    return wrong_rectified + right_rectified + unchanged_correct + unchanged_wrong;
  }
  /// wrong / right; 0 when both are zero.
  double ratio() const;
  bool no_change() const { return wrong_rectified == 0 && right_rectified == 0; }
  /// Nonzero wrong count over a zero right count.
  bool undefined() const { return right_rectified == 0 && wrong_rectified > 0; }
  std::string ratio_text() const;
  void merge(const FalseCorrectionStats& o);
};

/// Wrongly rectified: correct under P, wrong under C; rightly: the reverse.
/// "Unchanged" means the correctness did not change.
FalseCorrectionStats false_correction_stats(const data::LabelMap& seg_p, const data::LabelMap& seg_c,
                                            const data::LabelMap& gt);

// ------------------------------------------------------------- reports

void write_pda_csv(const std::filesystem::path& path, const CurveSeries& pda);
void write_cca_csv(const std::filesystem::path& path, const CurveSeries& pda,
                   const CurveSeries& cca);
void write_false_correction_csv(const std::filesystem::path& path,
                                const std::vector<std::pair<std::string, FalseCorrectionStats>>& rows);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

struct ChartSeries {
  std::string label;
  std::vector<CurvePoint> points;
};

/// Minimal SVG line chart.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<ChartSeries>& series);

}  // namespace flowseg::evaluation

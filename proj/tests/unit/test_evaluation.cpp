#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "flowseg/data/io.hpp"
#include "flowseg/error.hpp"
#include "flowseg/evaluation/runner.hpp"
#include "support.hpp"

using namespace flowseg;
using namespace flowseg::evaluation;
using data::LabelMap;
namespace fs = std::filesystem;

namespace {

LabelMap grid(int h, int w, std::vector<int> v, int k = 2) {
  LabelMap l(h, w, k);
  for (std::size_t i = 0; i < v.size(); ++i) l.values[i] = static_cast<std::uint8_t>(v[i]);
  return l;
}

LabelMap random_labels(int h, int w, int k, std::mt19937_64& rng, double ignore_rate = 0) {
  LabelMap l(h, w, k);
  std::uniform_int_distribution<int> u(0, k - 1);
  std::bernoulli_distribution ig(ignore_rate);
  for (auto& v : l.values) v = static_cast<std::uint8_t>(ig(rng) ? l.ignore_index : u(rng));
  return l;
}

/// Per-pixel tally straight from the definition.
double brute_miou(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts, int k) {
  std::vector<long> tp(k), fp(k), fn(k);
  for (std::size_t n = 0; n < preds.size(); ++n) {
    for (std::size_t i = 0; i < gts[n].size(); ++i) {
      if (gts[n].ignored(i)) continue;
      const int g = gts[n].values[i], p = preds[n].values[i];
      if (g == p) {
        ++tp[g];
      } else {
        ++fn[g];
        if (p < k) ++fp[p];
      }
    }
  }
  double sum = 0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    const long denom = tp[c] + fp[c] + fn[c];
    if (denom == 0) continue;
    sum += static_cast<double>(tp[c]) / denom;
    ++present;
  }
  return sum / present;
}

}  // namespace

TEST_CASE("miou examples") {
  const auto gt = grid(2, 2, {0, 1, 1, 1});
  const auto pred = grid(2, 2, {0, 0, 1, 1});
  const auto r = miou({&pred}, {&gt}, 2);
  CHECK(r.per_class[0] == doctest::Approx(0.5));
  CHECK(r.per_class[1] == doctest::Approx(2.0 / 3));
  CHECK(r.mean == doctest::Approx(7.0 / 12).epsilon(1e-12));
  CHECK(miou({&gt}, {&gt}, 2).mean == 1.0);

  auto ignored = gt;
  std::fill(ignored.values.begin(), ignored.values.end(), ignored.ignore_index);
  CHECK_THROWS_AS(miou({&pred}, {&ignored}, 2), std::invalid_argument);
  CHECK_THROWS_AS(miou({}, {}, 2), std::invalid_argument);
  CHECK_THROWS_AS(miou({&pred}, {&gt, &gt}, 2), std::invalid_argument);

  // A class present in neither map is excluded from the mean.
  const auto r3 = miou({&pred}, {&gt}, 3);
  CHECK(std::isnan(r3.per_class[2]));
  CHECK(r3.mean == doctest::Approx(7.0 / 12));
}

TEST_CASE("miou matches a brute-force tally on random maps") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + trial % 4;
    std::vector<LabelMap> preds, gts;
    std::vector<const LabelMap*> pp, gp;
    for (int n = 0; n < 3; ++n) {
      preds.push_back(random_labels(16, 16, k, rng));
      gts.push_back(random_labels(16, 16, k, rng, 0.1));
    }
    for (int n = 0; n < 3; ++n) {
      pp.push_back(&preds[n]);
      gp.push_back(&gts[n]);
    }
    CHECK(miou(pp, gp, k).mean == doctest::Approx(brute_miou(preds, gts, k)).epsilon(1e-12));
  }
}

TEST_CASE("confusion matrix merge is order independent") {
  std::mt19937_64 rng(2);
  std::vector<ConfusionMatrix> parts(5, ConfusionMatrix(4));
  for (auto& p : parts) p.add(random_labels(8, 8, 4, rng), random_labels(8, 8, 4, rng, 0.2));
  ConfusionMatrix fwd(4), rev(4);
  for (int i = 0; i < 5; ++i) fwd.merge(parts[i]);
  for (int i = 4; i >= 0; --i) rev.merge(parts[i]);
  CHECK(fwd.total() == rev.total());
  for (int g = 0; g < 4; ++g)
    for (int p = 0; p < 4; ++p) CHECK(fwd.at(g, p) == rev.at(g, p));
  CHECK_THROWS_AS(fwd.merge(ConfusionMatrix(3)), std::invalid_argument);
}

TEST_CASE("mean cost") {
  CHECK(std::abs(mean_cost(826.378, 212.910, 5) - 315.155) <= 5e-4);
  CHECK(mean_cost(10.0, 3.0, 0) == 10.0);
  CHECK_THROWS_AS(mean_cost(10.0, 3.0, -1), std::invalid_argument);
  double prev = mean_cost(10.0, 3.0, 0);
  for (int d = 1; d < 200; ++d) {
    const double cur = mean_cost(10.0, 3.0, d);
    CHECK(cur < prev);
    CHECK(cur > 3.0);
    prev = cur;
  }
  CostModel bad;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("pda and cca curves") {
  std::map<int, MiouResult> runs;
  for (int d = 1; d <= 9; ++d) runs[d] = {0.9 - 0.01 * d, {}};
  const auto pda = pda_curve("m", runs, 1, 9);
  REQUIRE(pda.points.size() == 9);
  for (std::size_t i = 1; i < pda.points.size(); ++i) CHECK(pda.points[i].x > pda.points[i - 1].x);

  CostModel model;
  model.c_seg = 826.378e9;
  model.c_warp = 212.910e9;
  const auto cca = cca_curve(pda, model);
  REQUIRE(cca.points.size() == pda.points.size());
  for (std::size_t i = 0; i < pda.points.size(); ++i) {
    CHECK(cca.points[i].y == pda.points[i].y);
    CHECK(cca.points[i].x == mean_cost(model, static_cast<int>(pda.points[i].x)) / 1e9);
  }
  CHECK(std::abs(cca.points[4].x - 315.155) <= 5e-4);

  std::map<int, MiouResult> flat;
  for (int d = 1; d <= 9; ++d) flat[d] = {0.5, {}};
  const auto h = cca_curve(pda_curve("flat", flat, 1, 9), model);
  for (std::size_t i = 1; i < h.points.size(); ++i) {
    CHECK(h.points[i].y == h.points[0].y);
    CHECK(h.points[i].x < h.points[i - 1].x);
  }

  runs.erase(4);
  runs.erase(7);
  try {
    pda_curve("m", runs, 1, 9);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find('4') != std::string::npos);
    CHECK(msg.find('7') != std::string::npos);
  }
}

TEST_CASE("false correction examples") {
  const auto gt = grid(2, 2, {0, 0, 1, 1});
  const auto p = grid(2, 2, {0, 1, 1, 1});
  const auto c = grid(2, 2, {1, 1, 0, 1});
  const auto s = false_correction_stats(p, c, gt);
  CHECK(s.wrong_rectified == 2);
  CHECK(s.right_rectified == 0);
  CHECK(s.undefined());
  CHECK(s.ratio_text() == "2/0");
  CHECK(std::isinf(s.ratio()));

  const auto same = false_correction_stats(p, p, gt);
  CHECK(same.no_change());
  CHECK(same.ratio() == 0.0);

  const auto fixed = false_correction_stats(p, gt, gt);
  CHECK(fixed.wrong_rectified == 0);
  CHECK(fixed.right_rectified == 1);
  CHECK(fixed.ratio() == 0.0);
  CHECK_THROWS_AS(false_correction_stats(p, grid(1, 2, {0, 0}), gt), std::invalid_argument);
}

TEST_CASE("false correction counts partition the valid pixels") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto gt = random_labels(16, 16, 4, rng, 0.15);
    const auto p = random_labels(16, 16, 4, rng), c = random_labels(16, 16, 4, rng);
    const auto s = false_correction_stats(p, c, gt);
    std::int64_t valid = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) valid += !gt.ignored(i);
    CHECK(s.valid() == valid);
  }
}

TEST_CASE("report files") {
  const fs::path dir = testing::scratch_dir("reports");
  std::map<int, MiouResult> runs;
  for (int d = 1; d <= 3; ++d) runs[d] = {0.5, {0.4, std::nan(""), 0.6}};
  const auto pda = pda_curve("m", runs, 1, 3);
  write_pda_csv(dir / "pda.csv", pda);
  std::ifstream f(dir / "pda.csv");
  std::string header, row;
  std::getline(f, header);
  std::getline(f, row);
  CHECK(header == "distance,miou,iou_class_0,iou_class_1,iou_class_2");
  CHECK(row == "1,0.5,0.4,,0.6");

  write_false_correction_csv(dir / "fc.csv", {{"method", FalseCorrectionStats{2, 0, 1, 1}}});
  std::ifstream g(dir / "fc.csv");
  std::getline(g, header);
  std::getline(g, row);
  CHECK(row == "method,2,0,1,1,2/0,zero-denominator");

  const std::string svg = svg_line_chart("t", "x", "y", {{"a", {{1, 0.5}, {2, 0.6}}}});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cost model of the default networks") {
  networks::Models m(networks::NetworkConfig{});
  const CostModel cost = build_cost_model(m, 64, 64);
  CHECK(cost.c_seg == 49639936.0);
  CHECK(cost.c_warp > 0);
  CHECK(cost.c_warp < cost.c_seg);
  const CostModel big = build_cost_model(m, 128, 128);
  CHECK(big.c_seg == 4 * cost.c_seg);
  CHECK(big.c_warp == 4 * cost.c_warp);
  CHECK(network_flops(m, 64, 64).size() == 4);
}

TEST_CASE("pda runner on a small dataset") {
  const fs::path root = testing::scratch_dir("pda_data");
  data::generate_synthetic_dataset(testing::small_spec(), root, true);
  const auto manifest = data::Manifest::load(root);
  const auto clips = data::load_split(root, manifest, "train");
  networks::Models m(networks::NetworkConfig{});
  PdaOptions opt{1, 4, 10, 1};

  const VariantRun oracle = run_pda(clips, m, inference::FusionMode::kOracle, opt, 4);
  CHECK(oracle.by_distance.size() == 4);
  CHECK(oracle.flipped_correct == 0);
  CHECK(oracle.checked_correct > 0);
  const VariantRun prop = run_pda(clips, m, inference::FusionMode::kPropagationOnly, opt, 4);
  CHECK(prop.false_correction.no_change());
  CHECK(oracle.mean_miou() >= prop.mean_miou());
  for (const auto& [d, cm] : prop.by_distance) CHECK(cm.total() == oracle.by_distance.at(d).total());

  PdaOptions two_jobs = opt;
  two_jobs.jobs = 2;
  const VariantRun par = run_pda(clips, m, inference::FusionMode::kPredicted, two_jobs, 4);
  const VariantRun ser = run_pda(clips, m, inference::FusionMode::kPredicted, opt, 4);
  CHECK(par.mean_miou() == ser.mean_miou());

  PdaOptions too_far{1, 11, 10, 1};
  CHECK_THROWS(run_pda(clips, m, inference::FusionMode::kPredicted, too_far, 4));
  fs::remove_all(root);
}

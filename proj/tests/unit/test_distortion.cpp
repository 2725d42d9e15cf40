#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "flowseg/distortion/distortion.hpp"
#include "flowseg/networks/models.hpp"
#include "support.hpp"

using namespace flowseg;
using namespace flowseg::distortion;
using Td = BasicTensor<double>;

namespace {

data::LabelMap random_labels(int h, int w, int k, std::mt19937_64& rng) {
  data::LabelMap l(h, w, k);
  std::uniform_int_distribution<int> u(0, k - 1);
  for (auto& v : l.values) v = static_cast<std::uint8_t>(u(rng));
  return l;
}

/// Mean precision at the rank of each positive; scores assumed distinct.
double ap_by_rank(const std::vector<float>& scores, const std::vector<std::uint8_t>& targets) {
  double sum = 0;
  int positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!targets[i]) continue;
    ++positives;
    int above = 0, above_pos = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (scores[j] >= scores[i]) {
        ++above;
        above_pos += targets[j];
      }
    }
    sum += static_cast<double>(above_pos) / above;
  }
  return positives ? sum / positives : 0.0;
}

}  // namespace

TEST_CASE("similarity examples") {
  std::mt19937_64 rng(1);
  const Td a = testing::random_tensor<double>(2, 5, 4, 4, rng);
  Td neg(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) neg.data()[i] = -a.data()[i];
  const Td same = similarity_map(a, a), opposite = similarity_map(a, neg);
  for (double v : same.span()) CHECK(v == doctest::Approx(1.0).epsilon(1e-7));
  for (double v : opposite.span()) CHECK(v == doctest::Approx(-1.0).epsilon(1e-7));

  Td x(1, 2, 1, 1), y(1, 2, 1, 1);
  x.at(0, 0, 0, 0) = 1;
  y.at(0, 1, 0, 0) = 1;
  CHECK(similarity_map(x, y).data()[0] == 0.0);

  const Td zero(1, 5, 4, 4);
  const Td half_zero = similarity_map(zero, a.slice_batch(0, 1));
  for (double v : half_zero.span()) CHECK(std::isfinite(v));
  const Td both_zero = similarity_map(zero, zero);
  for (double v : both_zero.span()) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(similarity_map(a, Td(2, 3, 4, 4)), std::invalid_argument);
}

TEST_CASE("distortion from similarity") {
  Td s(1, 1, 1, 3);
  s.data()[0] = 1;
  s.data()[1] = -1;
  s.data()[2] = 0;
  const Td m = distortion_from_similarity(s);
  CHECK(m.data()[0] == 0.0);
  CHECK(m.data()[1] == 1.0);
  CHECK(m.data()[2] == 0.5);
}

TEST_CASE("similarity gradient matches central differences") {
  std::mt19937_64 rng(2);
  const Td a = testing::random_tensor<double>(1, 4, 8, 8, rng);
  const Td b = testing::random_tensor<double>(1, 4, 8, 8, rng);
  const Td probe = testing::random_tensor<double>(1, 1, 8, 8, rng);
  auto loss = [&](const Td& fa, const Td& fb) {
    const Td s = similarity_map(fa, fb);
    double t = 0;
    for (std::size_t i = 0; i < s.size(); ++i) t += s.data()[i] * probe.data()[i];
    return t;
  };
  Td da, db;
  similarity_map_backward(a, b, probe, &da, &db);
  CHECK(testing::relative_error(da, testing::numeric_gradient(a, [&](const Td& x) { return loss(x, b); })) < 1e-4);
  CHECK(testing::relative_error(db, testing::numeric_gradient(b, [&](const Td& x) { return loss(a, x); })) < 1e-4);
}

TEST_CASE("identical frames give zero distortion for any dmnet parameters") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    networks::NetworkConfig cfg;
    cfg.init_seed = seed;
    networks::Models m(cfg);
    std::mt19937_64 rng(seed + 100);
    const Tensor f = testing::random_tensor<float>(1, 3, 32, 48, rng);
    const Tensor g = testing::random_tensor<float>(1, 3, 32, 48, rng);
    const Tensor zero = predict_distortion(f, f, m.dmnet);
    CHECK(zero.shape() == Shape{1, 1, 8, 12});
    for (float v : zero.span()) CHECK(std::abs(v) <= 1e-6f);
    const Tensor other = predict_distortion(f, g, m.dmnet);
    for (float v : other.span()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    CHECK_THROWS_AS(predict_distortion(f, testing::random_tensor<float>(1, 3, 32, 32, rng), m.dmnet),
                    std::invalid_argument);
  }
}

TEST_CASE("ground truth is an xor of label maps") {
  std::mt19937_64 rng(3);
  const auto a = random_labels(6, 7, 4, rng);
  auto b = a;
  CHECK(distortion_ground_truth(a, b).positives() == 0);
  b.at(2, 3) = static_cast<std::uint8_t>((b.at(2, 3) + 1) % 4);
  const auto one = distortion_ground_truth(a, b);
  CHECK(one.positives() == 1);
  CHECK(one.values.at(0, 0, 2, 3) == 1.0f);

  const auto c = random_labels(6, 7, 4, rng);
  const auto ac = distortion_ground_truth(a, c), ca = distortion_ground_truth(c, a);
  CHECK(ac.values == ca.values);
  const std::vector<int> perm{2, 0, 3, 1};
  auto pa = a, pc = c;
  for (auto& v : pa.values) v = static_cast<std::uint8_t>(perm[v]);
  for (auto& v : pc.values) v = static_cast<std::uint8_t>(perm[v]);
  CHECK(distortion_ground_truth(pa, pc).values == ac.values);

  auto ig = a;
  ig.values[0] = static_cast<std::uint8_t>(ig.ignore_index);
  const auto masked = distortion_ground_truth(ig, c);
  CHECK(masked.valid[0] == 0);
  CHECK(masked.valid_count() == a.size() - 1);
  CHECK_THROWS_AS(distortion_ground_truth(a, data::LabelMap(6, 6, 4)), std::invalid_argument);
}

TEST_CASE("dmnet loss values") {
  Tensor half(1, 1, 4, 4, 0.5f);
  Tensor gt(1, 1, 4, 4);
  for (int i = 0; i < 5; ++i) gt.data()[i] = 1.0f;
  CHECK(dmnet_loss(half, gt, nullptr, false).value == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  const Tensor zero(1, 1, 4, 4);
  CHECK(dmnet_loss(zero, zero, nullptr).value < 1e-6);
  const Tensor ones(1, 1, 4, 4, 1.0f);
  CHECK(dmnet_loss(ones, ones, nullptr).value < 1e-6);

  // 5 positives, 11 negatives: positive weight 11/5.
  const double w = 11.0 / 5.0;
  CHECK(dmnet_loss(half, gt, nullptr, true).value ==
        doctest::Approx((5 * w + 11) * std::log(2.0) / 16).epsilon(1e-9));
  Tensor sparse(1, 1, 16, 16);
  sparse.data()[0] = 1.0f;
  const Tensor half_big(1, 1, 16, 16, 0.5f);
  CHECK(dmnet_loss(half_big, sparse, nullptr, true).value ==
        doctest::Approx((100 + 255) * std::log(2.0) / 256).epsilon(1e-9));

  data::Mask none(16, 0);
  CHECK_THROWS_AS(dmnet_loss(half, gt, &none), std::invalid_argument);
  data::Mask some(16, 0);
  some[0] = 1;
  some[15] = 1;
  CHECK(dmnet_loss(half, gt, &some, false).value == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("dmnet loss gradient") {
  std::mt19937_64 rng(4);
  const Td p0 = testing::random_tensor<double>(1, 1, 8, 8, rng, 0.05, 0.95);
  Tensor gt(1, 1, 8, 8);
  for (std::size_t i = 0; i < gt.size(); i += 5) gt.data()[i] = 1.0f;
  auto to_float = [](const Td& t) {
    Tensor f(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) f.data()[i] = static_cast<float>(t.data()[i]);
    return f;
  };
  const LossValue l = dmnet_loss(to_float(p0), gt, nullptr, true);
  const Td num = testing::numeric_gradient(
      p0, [&](const Td& p) { return dmnet_loss(to_float(p), gt, nullptr, true).value; }, 1e-3);
  Td ana(l.grad.shape());
  for (std::size_t i = 0; i < ana.size(); ++i) ana.data()[i] = l.grad.data()[i];
  CHECK(testing::relative_error(ana, num) < 1e-2);
}

TEST_CASE("average precision") {
  CHECK(average_precision({0.9f, 0.8f, 0.1f}, {1, 1, 0}) == doctest::Approx(1.0));
  CHECK(average_precision({0.9f, 0.8f, 0.1f}, {0, 0, 1}) == doctest::Approx(1.0 / 3));
  CHECK(average_precision({0.5f, 0.5f}, {1, 0}) == doctest::Approx(0.5));
  CHECK(average_precision({0.5f}, {0}) == 0.0);
  CHECK_THROWS(average_precision({0.5f}, {0, 1}));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0, 1);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> s(40);
    std::vector<std::uint8_t> t(40);
    for (int i = 0; i < 40; ++i) {
      s[i] = u(rng);
      t[i] = coin(rng);
    }
    CHECK(average_precision(s, t) == doctest::Approx(ap_by_rank(s, t)).epsilon(1e-9));
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <map>
#include <numeric>

#include "flowseg/error.hpp"
#include "flowseg/kernels/conv.hpp"
#include "flowseg/kernels/resample.hpp"
#include "flowseg/networks/models.hpp"
#include "flowseg/reference/kernels.hpp"
#include "support.hpp"

using namespace flowseg;
using namespace flowseg::networks;
using Td = BasicTensor<double>;
using kernels::ConvGeometry;

namespace {

LayerSpec layer(LayerKind kind, int ci, int co, int k, int hi, int wi, int ho, int wo) {
  LayerSpec l;
  l.name = "x";
  l.kind = kind;
  l.in_channels = ci;
  l.out_channels = co;
  l.kernel_h = l.kernel_w = k;
  l.in_h = hi;
  l.in_w = wi;
  l.out_h = ho;
  l.out_w = wo;
  return l;
}

Tensor random_frame(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return testing::random_tensor<float>(1, 3, h, w, rng, 0, 1);
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double dot(const Td& a, const Td& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

std::map<std::string, std::int64_t> totals(Models& m, int h, int w) {
  return {{"segnet", describe_flops(m.segnet.spec(h, w), h, w).total},
          {"flownet", describe_flops(m.flownet.spec(h, w), h, w).total},
          {"dmnet", describe_flops(m.dmnet.spec(h, w), h, w).total},
          {"cfnet", describe_flops(m.cfnet.spec(h, w), h, w).total}};
}

}  // namespace

TEST_CASE("layer flops hand values") {
  CHECK(layer_flops(layer(LayerKind::kConvolution, 3, 4, 3, 4, 4, 2, 2)) == 896);
  CHECK(layer_flops(layer(LayerKind::kBilinearUpsampling, 2, 2, 1, 2, 2, 4, 4)) == 352);
  CHECK(layer_flops(layer(LayerKind::kBatchNormalization, 3, 3, 1, 2, 2, 2, 2)) == 24);
  CHECK(layer_flops(layer(LayerKind::kActivation, 3, 3, 1, 2, 2, 2, 2)) == 12);
  // depthwise 2*4*(9+1)*3 plus pointwise 2*4*(3+1)*5
  CHECK(layer_flops(layer(LayerKind::kSeparableConvolution, 3, 5, 3, 2, 2, 2, 2)) == 240 + 160);
  CHECK(layer_flops(layer(LayerKind::kDeconvolution, 2, 3, 4, 2, 2, 4, 4)) == 2 * 16 * 33 * 3);
  CHECK_THROWS(layer_kind_from_string("pooling"));
}

TEST_CASE("default network flops match the hand-summed fixture") {
  std::ifstream f(std::string(FLOWSEG_FIXTURE_DIR) + "/default_flops.json");
  REQUIRE(f);
  const auto fixture = nlohmann::json::parse(f);
  Models m(NetworkConfig{});
  const int h = fixture["input"][0], w = fixture["input"][1];
  const auto t = totals(m, h, w);
  for (const auto& [name, value] : t) {
    INFO(name);
    CHECK(value == fixture[name].get<std::int64_t>());
  }
}

TEST_CASE("flops additivity and quadratic scaling") {
  Models m(NetworkConfig{});
  for (const auto& spec : {m.segnet.spec(64, 64), m.flownet.spec(64, 64), m.dmnet.spec(64, 64),
                           m.cfnet.spec(64, 64)}) {
    const auto small = describe_flops(spec, 64, 64);
    std::int64_t sum = 0;
    for (const auto& l : small.layers) sum += l.flops;
    CHECK(sum == small.total);
  }
  const auto a = totals(m, 64, 64);
  const auto b = totals(m, 128, 128);
  for (const auto& [name, v] : a) CHECK(b.at(name) == 4 * v);
  const auto s1 = describe_flops(m.cfnet.spec(64, 64), 64, 64);
  const auto s2 = describe_flops(m.cfnet.spec(128, 128), 128, 128);
  REQUIRE(s1.layers.size() == s2.layers.size());
  for (std::size_t i = 0; i < s1.layers.size(); ++i) CHECK(s2.layers[i].flops == 4 * s1.layers[i].flops);
}

TEST_CASE("shape closure at stride 4") {
  Models m(NetworkConfig{});
  const Tensor frame = random_frame(64, 64, 3);
  auto [feat, logits] = m.segnet.forward(frame);
  CHECK(feat.shape() == Shape{1, 32, 16, 16});
  CHECK(logits.shape() == Shape{1, 4, 16, 16});
  CHECK(m.dmnet.features(frame, Mode::kEval, nullptr).shape() == Shape{1, 16, 16, 16});
  CHECK(m.cfnet.forward(frame, Mode::kEval, nullptr).shape() == feat.shape());
  CHECK(m.flownet.forward(frame, frame, Mode::kEval, nullptr).shape() == Shape{1, 2, 64, 64});

  const Tensor wide = random_frame(64, 128, 4);
  CHECK(m.segnet.forward(wide).first.shape() == Shape{1, 32, 16, 32});
  CHECK(m.cfnet.forward(wide, Mode::kEval, nullptr).shape() == Shape{1, 32, 16, 32});
}

TEST_CASE("inputs that do not divide the encoder stride are rejected") {
  Models m(NetworkConfig{});
  CHECK_THROWS_AS(m.segnet.forward(random_frame(48, 64, 1)), std::invalid_argument);
  CHECK_THROWS_AS(m.cfnet.forward(random_frame(32, 64, 1), Mode::kEval, nullptr),
                  std::invalid_argument);
  CHECK_THROWS_AS(m.flownet.forward(random_frame(64, 64, 1), random_frame(32, 64, 1), Mode::kEval,
                                    nullptr),
                  std::invalid_argument);
}

TEST_CASE("cfnet structure") {
  Models m(NetworkConfig{});
  ParamSet seg, cf;
  m.segnet.collect(seg);
  m.cfnet.collect(cf);
  CHECK(cf.count() < seg.count());
  int product = 1;
  for (int s : CFNet::encoder_strides()) product *= s;
  CHECK(CFNet::encoder_strides().size() == CFNet::kEncoderLayers);
  CHECK(product == CFNet::kEncoderStride);
  CHECK(CFNet::kEncoderStride / (1 << CFNet::kDecoderLayers) == kFeatureStride);
}

TEST_CASE("head on a zero feature yields the bias and composes with the backbone") {
  Models m(NetworkConfig{});
  const Tensor frame = random_frame(64, 64, 9);
  auto [feat, logits] = m.segnet.forward(frame);
  CHECK(m.segnet.head().forward(feat, nullptr) == logits);
  const Tensor zero(1, 32, 4, 4);
  const Tensor out = m.segnet.head().forward(zero, nullptr);
  for (int c = 0; c < out.c(); ++c)
    for (std::size_t p = 1; p < out.shape().plane(); ++p) CHECK(out.plane(0, c)[p] == out.plane(0, c)[0]);
  CHECK_THROWS_AS(m.segnet.head().forward(Tensor(1, 16, 4, 4), nullptr), std::invalid_argument);
}

TEST_CASE("inference forward is deterministic and initialization is seeded") {
  NetworkConfig cfg;
  Models a(cfg), b(cfg);
  const Tensor frame = random_frame(64, 64, 5);
  CHECK(a.segnet.forward(frame).second == b.segnet.forward(frame).second);
  CHECK(a.segnet.forward(frame).second == a.segnet.forward(frame).second);
  CHECK(a.cfnet.forward(frame, Mode::kEval, nullptr) == b.cfnet.forward(frame, Mode::kEval, nullptr));
  cfg.init_seed = 99;
  Models c(cfg);
  CHECK_FALSE(a.segnet.forward(frame).second == c.segnet.forward(frame).second);
}

TEST_CASE("parallel kernels agree with the serial reference") {
  std::mt19937_64 rng(11);
  for (int stride : {1, 2}) {
    ConvGeometry g{3, 5, 3, 3, stride, 1};
    const auto x = testing::random_tensor<double>(2, 3, 9, 8, rng);
    const auto wgt = random_vec(5 * 3 * 9, rng), bias = random_vec(5, rng);
    CHECK(testing::relative_error(kernels::conv2d_forward(x, wgt.data(), bias.data(), g),
                                  reference::conv2d(x, wgt.data(), bias.data(), g)) < 1e-12);
  }
  {
    ConvGeometry g{3, 4, 4, 4, 2, 1};
    const auto x = testing::random_tensor<double>(2, 3, 5, 6, rng);
    const auto wgt = random_vec(3 * 4 * 16, rng), bias = random_vec(4, rng);
    const auto y = kernels::deconv2d_forward(x, wgt.data(), bias.data(), g);
    CHECK(y.shape() == Shape{2, 4, 10, 12});
    CHECK(testing::relative_error(y, reference::deconv2d(x, wgt.data(), bias.data(), g)) < 1e-12);
  }
  {
    const auto x = testing::random_tensor<double>(1, 4, 8, 8, rng);
    const auto dw = random_vec(4 * 9, rng), db = random_vec(4, rng);
    const auto pw = random_vec(6 * 4, rng), pb = random_vec(6, rng);
    ConvGeometry dg{4, 4, 3, 3, 2, 1};
    ConvGeometry pg{4, 6, 1, 1, 1, 0};
    const auto mid = kernels::depthwise_forward(x, dw.data(), db.data(), dg);
    const auto y = kernels::conv2d_forward(mid, pw.data(), pb.data(), pg);
    CHECK(testing::relative_error(
              y, reference::separable_conv2d(x, dw.data(), db.data(), pw.data(), pb.data(), 6, 3,
                                             2, 1)) < 1e-12);
  }
}

TEST_CASE("separable layer matches the reference in float") {
  nn::Rng rng(3);
  nn::SeparableConv2d sep("sep", 4, 6, 2, rng);
  std::mt19937_64 r2(4);
  const Tensor x = testing::random_tensor<float>(1, 4, 8, 8, r2);
  const Tensor y = sep.forward(x, nn::Mode::kEval, nullptr);
  const Tensor ref = reference::separable_conv2d(
      x, sep.depthwise_weight().value.data(), sep.depthwise_bias().value.data(),
      sep.pointwise_weight().value.data(), sep.pointwise_bias().value.data(), 6, 3, 2, 1);
  REQUIRE(y.shape() == ref.shape());
  float worst = 0;
  for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y.data()[i] - ref.data()[i]));
  CHECK(worst <= 1e-6f);
}

TEST_CASE("kernel gradients match central differences") {
  std::mt19937_64 rng(21);
  const double tol = 1e-6;

  SUBCASE("convolution") {
    ConvGeometry g{2, 3, 3, 3, 2, 1};
    auto x = testing::random_tensor<double>(2, 2, 5, 5, rng);
    auto wgt = random_vec(3 * 2 * 9, rng), bias = random_vec(3, rng);
    const auto probe = testing::random_tensor<double>(2, 3, 3, 3, rng);
    Td dx;
    std::vector<double> dw(wgt.size(), 0), db(3, 0);
    kernels::conv2d_backward(x, wgt.data(), probe, g, &dx, dw.data(), db.data());
    auto loss_x = [&](const Td& xx) { return dot(kernels::conv2d_forward(xx, wgt.data(), bias.data(), g), probe); };
    CHECK(testing::relative_error(dx, testing::numeric_gradient(x, loss_x)) < tol);
    Td wt(1, 1, 1, static_cast<int>(wgt.size()));
    std::copy(wgt.begin(), wgt.end(), wt.data());
    auto loss_w = [&](const Td& ww) { return dot(kernels::conv2d_forward(x, ww.data(), bias.data(), g), probe); };
    Td dwt(wt.shape());
    std::copy(dw.begin(), dw.end(), dwt.data());
    CHECK(testing::relative_error(dwt, testing::numeric_gradient(wt, loss_w)) < tol);
    const double bias_sum = std::accumulate(probe.plane(0, 0), probe.plane(0, 0) + 9, 0.0) +
                            std::accumulate(probe.plane(1, 0), probe.plane(1, 0) + 9, 0.0);
    CHECK(db[0] == doctest::Approx(bias_sum).epsilon(1e-12));
  }

  SUBCASE("deconvolution") {
    ConvGeometry g{2, 3, 4, 4, 2, 1};
    auto x = testing::random_tensor<double>(1, 2, 3, 4, rng);
    auto wgt = random_vec(2 * 3 * 16, rng), bias = random_vec(3, rng);
    const auto probe = testing::random_tensor<double>(1, 3, 6, 8, rng);
    Td dx;
    std::vector<double> dw(wgt.size(), 0), db(3, 0);
    kernels::deconv2d_backward(x, wgt.data(), probe, g, &dx, dw.data(), db.data());
    auto loss_x = [&](const Td& xx) { return dot(kernels::deconv2d_forward(xx, wgt.data(), bias.data(), g), probe); };
    CHECK(testing::relative_error(dx, testing::numeric_gradient(x, loss_x)) < tol);
    Td wt(1, 1, 1, static_cast<int>(wgt.size()));
    std::copy(wgt.begin(), wgt.end(), wt.data());
    auto loss_w = [&](const Td& ww) { return dot(kernels::deconv2d_forward(x, ww.data(), bias.data(), g), probe); };
    Td dwt(wt.shape());
    std::copy(dw.begin(), dw.end(), dwt.data());
    CHECK(testing::relative_error(dwt, testing::numeric_gradient(wt, loss_w)) < tol);
  }

  SUBCASE("depthwise") {
    ConvGeometry g{3, 3, 3, 3, 2, 1};
    auto x = testing::random_tensor<double>(1, 3, 6, 6, rng);
    auto wgt = random_vec(3 * 9, rng), bias = random_vec(3, rng);
    const auto probe = testing::random_tensor<double>(1, 3, 3, 3, rng);
    Td dx;
    std::vector<double> dw(wgt.size(), 0), db(3, 0);
    kernels::depthwise_backward(x, wgt.data(), probe, g, &dx, dw.data(), db.data());
    auto loss_x = [&](const Td& xx) { return dot(kernels::depthwise_forward(xx, wgt.data(), bias.data(), g), probe); };
    CHECK(testing::relative_error(dx, testing::numeric_gradient(x, loss_x)) < tol);
    Td wt(1, 1, 1, static_cast<int>(wgt.size()));
    std::copy(wgt.begin(), wgt.end(), wt.data());
    auto loss_w = [&](const Td& ww) { return dot(kernels::depthwise_forward(x, ww.data(), bias.data(), g), probe); };
    Td dwt(wt.shape());
    std::copy(dw.begin(), dw.end(), dwt.data());
    CHECK(testing::relative_error(dwt, testing::numeric_gradient(wt, loss_w)) < tol);
  }

  SUBCASE("bilinear resize") {
    auto x = testing::random_tensor<double>(1, 2, 4, 5, rng);
    const auto probe = testing::random_tensor<double>(1, 2, 16, 20, rng);
    const Td dx = kernels::resize_bilinear_backward(probe, x.shape());
    auto loss = [&](const Td& xx) { return dot(kernels::resize_bilinear(xx, 16, 20), probe); };
    CHECK(testing::relative_error(dx, testing::numeric_gradient(x, loss)) < tol);
  }
}

TEST_CASE("resize preserves constants and samples at pixel centres") {
  Td c(1, 1, 3, 3, 2.5);
  const Td big = kernels::resize_bilinear(c, 12, 12);
  for (double v : big.span()) CHECK(v == doctest::Approx(2.5));
  Td r(1, 1, 1, 2);
  r.at(0, 0, 0, 0) = 0;
  r.at(0, 0, 0, 1) = 1;
  const Td up = kernels::resize_bilinear(r, 1, 4);
  CHECK(up.at(0, 0, 0, 0) == doctest::Approx(0.0));
  CHECK(up.at(0, 0, 0, 1) == doctest::Approx(0.25));
  CHECK(up.at(0, 0, 0, 2) == doctest::Approx(0.75));
  CHECK(up.at(0, 0, 0, 3) == doctest::Approx(1.0));
}

TEST_CASE("checkpoint round trip and error semantics") {
  const auto dir = testing::scratch_dir("ckpt");
  NetworkConfig cfg;
  Models a(cfg);
  CHECK_FALSE(checkpoint_exists(dir, Stage::kSegnet));
  CHECK_THROWS_AS(load_checkpoint(dir, Stage::kSegnet, a), PrerequisiteError);

  CheckpointManifest m;
  m.seed = 7;
  m.epoch = 3;
  save_checkpoint(dir, Stage::kSegnet, a, m);
  CHECK(checkpoint_exists(dir, Stage::kSegnet));

  NetworkConfig other = cfg;
  other.init_seed = 42;
  Models b(other);
  const Tensor frame = random_frame(64, 64, 8);
  CHECK_THROWS_AS(load_checkpoint(dir, Stage::kSegnet, b), ConfigError);

  Models c(cfg);
  auto pa = a.stage_params(Stage::kSegnet).all();
  auto pc = c.stage_params(Stage::kSegnet).all();
  for (auto* p : pc) p->value.fill(0.0f);
  const auto loaded = load_checkpoint(dir, Stage::kSegnet, c);
  CHECK(loaded.epoch == 3);
  CHECK(loaded.seed == 7);
  CHECK(loaded.stage == "segnet");
  REQUIRE(pa.size() == pc.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pc[i]->value);
  CHECK(a.segnet.forward(frame).second == c.segnet.forward(frame).second);

  NetworkConfig wider = cfg;
  wider.feature_channels = 64;
  Models d(wider);
  CHECK_THROWS_AS(load_checkpoint(dir, Stage::kSegnet, d), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("stage order and prerequisites") {
  CHECK(stage_prerequisites(Stage::kSegnet).empty());
  CHECK(stage_prerequisites(Stage::kJoint).size() == 3);
  for (Stage s : all_stages()) {
    CHECK(stage_from_string(to_string(s)) == s);
    for (Stage p : stage_prerequisites(s)) CHECK(static_cast<int>(p) < static_cast<int>(s));
  }
  CHECK_THROWS(stage_from_string("finetune"));
}

TEST_CASE("network config validation") {
  NetworkConfig cfg;
  cfg.feature_channels = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = NetworkConfig{};
  cfg.lrelu_slope = 1.5f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(NetworkConfig::from_json({{"bogus", 1}}), ConfigError);
  const NetworkConfig round = NetworkConfig::from_json(NetworkConfig{}.to_json());
  CHECK(round.hash() == NetworkConfig{}.hash());
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "flowseg/data/io.hpp"
#include "flowseg/error.hpp"
#include "flowseg/nn/optim.hpp"
#include "flowseg/training/dds.hpp"
#include "flowseg/training/trainer.hpp"
#include "support.hpp"

using namespace flowseg;
using namespace flowseg::training;
using networks::Models;
using networks::NetworkConfig;
using networks::Stage;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(f, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  if (!s.empty() && s.back() == ',') out.push_back("");
  return out;
}

std::vector<std::uint8_t> blob(Models& m, Stage s) {
  return nn::serialize_params(m.stage_params(s).all());
}

/// Makes every segmentation decision confident without changing any argmax.
void sharpen_head(Models& m) {
  networks::ParamSet set;
  m.segnet.head().collect(set);
  for (auto* p : set.params) {
    for (float& v : p->value.span()) v *= 1000.0f;
  }
}

struct SmallData {
  fs::path root;
  std::vector<data::VideoClip> train;
  int annotated = 0;

  SmallData() : root(testing::scratch_dir("train_data")) {
    const auto spec = testing::small_spec();
    data::generate_synthetic_dataset(spec, root, true);
    const auto manifest = data::Manifest::load(root);
    train = data::load_split(root, manifest, "train");
    annotated = spec.annotated_index;
  }
  ~SmallData() { fs::remove_all(root); }
};

TrainConfig tiny_joint() {
  TrainConfig c = TrainConfig::desk_defaults();
  c.joint = {1, 1, 1e-3f, 2, 4, false};
  return c;
}

}  // namespace

TEST_CASE("propagation and correction loss examples") {
  for (auto fn : {&propagation_loss, &correction_loss}) {
    data::LabelMap one(1, 1, 2);
    one.values[0] = 1;
    Tensor perfect(1, 2, 1, 1);
    perfect.data()[1] = 100;
    CHECK(fn(perfect, {&one}).value < 1e-12);

    // p(gt) = 1 / (1 + (e - 1)) = e^-1
    Tensor logits(1, 2, 1, 1);
    logits.data()[0] = static_cast<float>(std::log(std::exp(1.0) - 1));
    CHECK(fn(logits, {&one}).value == doctest::Approx(1.0).epsilon(1e-6));

    data::LabelMap four(2, 2, 4);
    four.values = {0, 1, 2, 3};
    CHECK(fn(Tensor(1, 4, 2, 2), {&four}).value == doctest::Approx(std::log(4.0)).epsilon(1e-6));
  }
}

TEST_CASE("frame loss is the mean of its three terms") {
  CHECK(frame_loss(0, 0, 0) == 0.0);
  CHECK(frame_loss(0.3, 0.6, 0.9) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(frame_loss(0.7, 0.7, 0.7) == doctest::Approx(0.7).epsilon(1e-15));
  const auto b = make_bundle(1, 2, 6);
  CHECK(b.present);
  CHECK(b.total == 3.0);
}

TEST_CASE("ablation names") {
  CHECK(Ablation::parse("full").name() == "full");
  CHECK(Ablation::parse("").name() == "full");
  const Ablation a = Ablation::parse("no-dds");
  CHECK_FALSE(a.dds);
  CHECK(a.dgfl);
  CHECK(a.dgfc);
  const Ablation b = Ablation::parse("no-dgfl+no-dgfc");
  CHECK(b.dds);
  CHECK_FALSE(b.dgfl);
  CHECK_FALSE(b.dgfc);
  for (const char* s : {"no-dds", "no-dgfl", "no-dgfc"}) CHECK(Ablation::parse(s).name() == s);
  CHECK(Ablation::parse(b.name()).name() == b.name());
  CHECK_THROWS_AS(Ablation::parse("no-flow"), ConfigError);
}

TEST_CASE("training config") {
  const TrainConfig d = TrainConfig::desk_defaults();
  CHECK_NOTHROW(d.validate());
  CHECK(d.segnet.lr_at(0) == d.segnet.lr);
  CHECK(d.segnet.lr_at(d.segnet.lr_drop_epoch - 1) == d.segnet.lr);
  CHECK(d.segnet.lr_at(d.segnet.lr_drop_epoch) == doctest::Approx(d.segnet.lr / 10));
  CHECK(d.segnet.hflip);
  CHECK_FALSE(d.joint.hflip);

  const TrainConfig round = TrainConfig::from_json(d.to_json());
  CHECK(round.to_json() == d.to_json());
  CHECK_THROWS_AS(TrainConfig::from_json({{"learning_rate", 1}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"joint", {{"epochz", 3}}}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"joint", {{"epochs", -1}}}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"joint", {{"epochs", "many"}}}}), ConfigError);
  CHECK_THROWS(d.stage("finetune"));
}

TEST_CASE("pseudo labels are deterministic argmax maps without ignore") {
  Models m(NetworkConfig{});
  std::mt19937_64 rng(1);
  const Tensor frame = testing::random_tensor<float>(1, 3, 64, 64, rng);
  const auto a = pseudo_label(frame, m.segnet);
  const auto b = pseudo_label(frame, m.segnet);
  CHECK(a == b);
  CHECK(a.height == 64);
  CHECK(a.width == 64);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK_FALSE(a.ignored(i));
    CHECK(a.values[i] < 4);
  }
}

TEST_CASE("dds on a static clip with a confident segnet is a fixpoint") {
  Models m(NetworkConfig{});
  sharpen_head(m);
  std::mt19937_64 rng(2);
  const Tensor frame = testing::random_tensor<float>(1, 3, 64, 64, rng);
  const Tensor fs1 = m.segnet.forward(frame).first;
  const auto label = pseudo_label(frame, m.segnet);
  DdsSample s{&frame, &frame, &frame, &fs1, &label, &label};
  const DdsResult r = dds_step(m, {s}, Ablation{}, false);
  REQUIRE(r.at_f2.present);
  for (const LossBundle& b : {r.at_f2, r.at_f3}) {
    CHECK(b.l_p < 1e-3);
    CHECK(b.l_c < 1e-3);
    CHECK(b.l_dgfl < 1e-3);
  }
}

TEST_CASE("dds bundles obey the per-frame mean") {
  Models m(NetworkConfig{});
  std::mt19937_64 rng(3);
  const Tensor f1 = testing::random_tensor<float>(1, 3, 64, 64, rng);
  const Tensor f2 = testing::random_tensor<float>(1, 3, 64, 64, rng);
  const Tensor f3 = testing::random_tensor<float>(1, 3, 64, 64, rng);
  const Tensor fs1 = m.segnet.forward(f1).first;
  const auto p2 = pseudo_label(f2, m.segnet);
  data::LabelMap gt3(64, 64, 4);
  for (std::size_t i = 0; i < gt3.size(); ++i) gt3.values[i] = static_cast<std::uint8_t>(i % 4);

  DdsSample two{&f1, &f2, &f3, &fs1, &p2, &gt3};
  const DdsResult r = dds_step(m, {two}, Ablation{}, false);
  REQUIRE(r.at_f2.present);
  REQUIRE(r.at_f3.present);
  for (const LossBundle& b : {r.at_f2, r.at_f3}) {
    CHECK(b.total == frame_loss(b.l_p, b.l_c, b.l_dgfl));
    CHECK(b.l_p >= 0);
    CHECK(b.l_c >= 0);
    CHECK(b.l_dgfl >= 0);
  }
  CHECK(r.total == doctest::Approx(0.5 * (r.at_f2.total + r.at_f3.total)).epsilon(1e-12));

  DdsSample degenerate{&f1, nullptr, &f3, &fs1, nullptr, &gt3};
  const DdsResult d = dds_step(m, {degenerate}, Ablation{}, false);
  CHECK_FALSE(d.at_f2.present);
  CHECK(d.total == d.at_f3.total);

  const DdsResult no_dds = dds_step(m, {two}, Ablation::parse("no-dds"), false);
  CHECK_FALSE(no_dds.at_f2.present);
  CHECK(no_dds.at_f3.l_p == doctest::Approx(d.at_f3.l_p).epsilon(1e-6));
  CHECK_THROWS_AS(dds_step(m, {}, Ablation{}, false), std::invalid_argument);
}

TEST_CASE("200 optimizer steps on one batch reduce the loss") {
  Models m(NetworkConfig{});
  std::mt19937_64 rng(4);
  std::vector<Tensor> frames;
  for (int i = 0; i < 6; ++i) frames.push_back(testing::random_tensor<float>(1, 3, 64, 64, rng));
  const Tensor fs1a = m.segnet.forward(frames[0]).first, fs1b = m.segnet.forward(frames[3]).first;
  const auto p2a = pseudo_label(frames[1], m.segnet), p2b = pseudo_label(frames[4], m.segnet);
  data::LabelMap gt(64, 64, 4);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) gt.at(y, x) = static_cast<std::uint8_t>((x / 16 + y / 32) % 4);
  const std::vector<DdsSample> batch{{&frames[0], &frames[1], &frames[2], &fs1a, &p2a, &gt},
                                     {&frames[3], &frames[4], &frames[5], &fs1b, &p2b, &gt}};

  const auto frozen_before = blob(m, Stage::kSegnet);
  networks::ParamSet set = m.stage_params(Stage::kJoint);
  nn::Adam adam(set.params);
  double first = 0, last = 0;
  for (int step = 0; step < 200; ++step) {
    adam.zero_grad();
    const DdsResult r = dds_step(m, batch, Ablation{}, true);
    if (step == 0) first = r.total;
    last = r.total;
    adam.step(1e-3f);
  }
  MESSAGE("loss " << first << " -> " << last);
  CHECK(last < first);
  CHECK(blob(m, Stage::kSegnet) == frozen_before);
}

TEST_CASE("joint stage: prerequisites, frozen blobs, metrics log and determinism") {
  SmallData data;
  const fs::path base = testing::scratch_dir("ckpt");
  Models init(NetworkConfig{});
  CHECK_THROWS_AS(check_prerequisites(Stage::kJoint, base), PrerequisiteError);
  CHECK_NOTHROW(check_prerequisites(Stage::kSegnet, base));
  networks::save_checkpoint(base, Stage::kSegnet, init, {});
  networks::save_checkpoint(base, Stage::kFlowPretrain, init, {});
  CHECK_THROWS_AS(train_stage(Stage::kJoint, init, data.train, tiny_joint(), base, base / "joint",
                              base / "joint.csv"),
                  PrerequisiteError);
  networks::save_checkpoint(base, Stage::kDmnet, init, {});

  auto run = [&](const fs::path& out_dir, const fs::path& csv) {
    Models m(NetworkConfig{});
    const auto seg = blob(m, Stage::kSegnet), dm = blob(m, Stage::kDmnet);
    const auto flow = blob(m, Stage::kFlowPretrain);
    train_stage(Stage::kJoint, m, data.train, tiny_joint(), base, out_dir, csv, {}, data.annotated);
    CHECK(blob(m, Stage::kSegnet) == seg);
    CHECK(blob(m, Stage::kDmnet) == dm);
    CHECK_FALSE(blob(m, Stage::kFlowPretrain) == flow);
    CHECK(networks::checkpoint_exists(out_dir, Stage::kJoint));
    return read_lines(csv);
  };
  const auto a = run(base / "a", base / "a.csv");
  const auto b = run(base / "b", base / "b.csv");
  CHECK(a == b);
  REQUIRE(a.size() == 3);
  CHECK(a[0] == "step,L_P@F2,L_C@F2,L_DGFL@F2,L_P@F3,L_C@F3,L_DGFL@F3,L_total,lr");
  CHECK(split(a[1]).size() == 9);

  TrainConfig no_dds = tiny_joint();
  no_dds.ablation = Ablation::parse("no-dds");
  Models m(NetworkConfig{});
  train_stage(Stage::kJoint, m, data.train, no_dds, base, base / "c", base / "c.csv", {}, data.annotated);
  for (const auto& line : read_lines(base / "c.csv")) {
    if (line.rfind("step", 0) == 0) continue;
    const auto cells = split(line);
    REQUIRE(cells.size() == 9);
    CHECK(cells[1].empty());
    const double mean = (std::stod(cells[4]) + std::stod(cells[5]) + std::stod(cells[6])) / 3;
    CHECK(std::stod(cells[7]) == doctest::Approx(mean).epsilon(1e-5));
  }
  fs::remove_all(base);
}

TEST_CASE("endpoint error") {
  Tensor flow(1, 2, 1, 2), target(1, 2, 1, 2);
  flow.at(0, 0, 0, 0) = 3;
  flow.at(0, 1, 0, 0) = 4;
  Tensor grad;
  CHECK(endpoint_error(flow, target, &grad) == doctest::Approx(2.5));
  CHECK(grad.at(0, 0, 0, 0) == doctest::Approx(0.3));
  CHECK(grad.at(0, 1, 0, 0) == doctest::Approx(0.4));
  CHECK(endpoint_error(target, target, nullptr) < 1e-5);
}

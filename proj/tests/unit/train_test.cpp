#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "layerseg/errors.hpp"
#include "layerseg/scan.hpp"
#include "layerseg/train.hpp"

namespace layerseg {
namespace {

using namespace nn;
namespace fs = std::filesystem;

Sample scan_sample(std::size_t points, std::uint64_t seed, Strategy s = Strategy::S2) {
  SceneSpec spec;
  spec.upper = GarmentClass::TShirt;
  spec.lower = GarmentClass::LongPants;
  spec.overlap_band_m = 0.08;
  spec.pose_seed = seed;
  spec.shape_seed = seed + 1;
  ScanConfig sc;
  sc.rays_per_view = 300;
  sc.seed = seed;
  const LabeledScan raw = resample(scan(sample_scene(spec), sc), points, 0);
  return {"scene" + std::to_string(seed), raw.cloud, encode(raw.labels, s)};
}

ModelConfig tiny(Backbone b = Backbone::PointTransformer) {
  ModelConfig c = model_config_for(Strategy::S2, b);
  c.feature_width = 12;
  c.k_neighbors = 8;
  return c;
}

TrainConfig quick(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 2;
  t.seed = 5;
  return t;
}

bool same_params(Model<float>& a, Model<float>& b) {
  auto& pa = a.parameters();
  auto& pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name || !(pa[i].value.array() == pb[i].value.array()).all()) return false;
  }
  return true;
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("layerseg_train_test_" + name);
}

TEST(OneCycle, EndpointsAndPeak) {
  OneCycle s{0.01, 25.0, 1e4, 0.5};
  EXPECT_NEAR(s.at(0.0), 0.01 / 25.0, 1e-17);
  EXPECT_DOUBLE_EQ(s.at(0.5), 0.01);
  EXPECT_NEAR(s.at(1.0), 0.01 / 25.0 / 1e4, 1e-18);
  EXPECT_DOUBLE_EQ(s.at_step(0, 10), s.at(0.0));
  EXPECT_DOUBLE_EQ(s.at_step(9, 10), s.at(1.0));
  EXPECT_DOUBLE_EQ(s.at_step(0, 1), s.at(0.0));
}

TEST(OneCycle, RisesThenFalls) {
  for (double pct : {0.2, 0.3, 0.5, 0.8}) {
    OneCycle s{0.005, 25.0, 1e4, pct};
    double prev = s.at(0.0);
    for (int i = 1; i <= 1000; ++i) {
      const double x = i / 1000.0;
      const double v = s.at(x);
      if (x <= pct) {
        EXPECT_GE(v, prev) << pct << " " << x;
      } else {
        EXPECT_LE(v, prev) << pct << " " << x;
      }
      EXPECT_LE(v, s.peak * (1 + 1e-12));
      EXPECT_GE(v, s.final_lr() * (1 - 1e-12));
      prev = v;
    }
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  t.epochs = 0;
  EXPECT_THROW(t.validate(), InvalidArgument);
  t = {};
  t.pct_start = 1.0;
  EXPECT_THROW(t.validate(), InvalidArgument);
  t = {};
  t.lr_peak = -1;
  EXPECT_THROW(t.validate(), InvalidArgument);
  t = {};
  t.beta2 = 1.0;
  EXPECT_THROW(t.validate(), InvalidArgument);
}

TEST(AdamW, ZeroGradientOnlyDecays) {
  Model<float> m(tiny(), 1);
  Model<float> ref(tiny(), 1);
  AdamW<float> opt;
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  for (auto& p : m.parameters()) p.zero_grad();
  opt.step(m.parameters(), 0.01, cfg);
  EXPECT_TRUE(same_params(m, ref));

  cfg.weight_decay = 0.5;
  opt.step(m.parameters(), 0.1, cfg);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const Mat<float> expect = ref.parameters()[i].value * 0.95f;
    EXPECT_TRUE(m.parameters()[i].value.isApprox(expect, 1e-6f)) << m.parameters()[i].name;
  }
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  Model<float> m(tiny(), 1);
  Model<float> ref(tiny(), 1);
  AdamW<float> opt;
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  for (auto& p : m.parameters()) {
    p.zero_grad();
    p.grad.setConstant(-3.0f);
  }
  opt.step(m.parameters(), 0.01, cfg);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const Mat<float> d = m.parameters()[i].value - ref.parameters()[i].value;
    EXPECT_NEAR(d.minCoeff(), 0.01f, 1e-5f);
    EXPECT_NEAR(d.maxCoeff(), 0.01f, 1e-5f);
  }
}

TEST(Augment, RotationAboutZWithinRanges) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Augment a = draw_augment(rng);
    EXPECT_TRUE(is_orthonormal(a.rotation));
    EXPECT_NEAR(a.rotation.determinant(), 1.0, 1e-12);
    EXPECT_NEAR(a.rotation(2, 2), 1.0, 1e-12);
    EXPECT_GE(a.scale, 0.9);
    EXPECT_LT(a.scale, 1.1);
    EXPECT_LE(a.translation.cwiseAbs().maxCoeff(), 0.1);
  }
}

TEST(Train, DeterministicWithAndWithoutAugmentation) {
  const std::vector<Sample> data = {scan_sample(96, 1), scan_sample(96, 2), scan_sample(96, 3)};
  for (bool augment : {false, true}) {
    ModelConfig mc = tiny();
    mc.augment = augment;
    TrainState a{Model<float>(mc, 4), {}, 0, 0};
    TrainState b{Model<float>(mc, 4), {}, 0, 0};
    const auto la = train(a, data, {data[0]}, Strategy::S2, quick(3));
    const auto lb = train(b, data, {data[0]}, Strategy::S2, quick(3));
    ASSERT_EQ(la.size(), 3u);
    for (std::size_t e = 0; e < la.size(); ++e) EXPECT_EQ(log_row(la[e]), log_row(lb[e]));
    EXPECT_TRUE(same_params(a.model, b.model));
    EXPECT_EQ(a.step, 6u);
  }
}

TEST(Train, AugmentationLeavesSamplesUntouched) {
  const std::vector<Sample> data = {scan_sample(64, 1)};
  const auto before = data[0];
  ModelConfig mc = tiny();
  mc.augment = true;
  TrainState s{Model<float>(mc, 4), {}, 0, 0};
  train(s, data, {}, Strategy::S2, quick(2));
  EXPECT_EQ(data[0].labels.layers, before.labels.layers);
  for (std::size_t i = 0; i < before.cloud.size(); ++i) {
    EXPECT_EQ(data[0].cloud.positions[i], before.cloud.positions[i]);
  }
}

TEST(Train, NonFiniteLossAbortsWithContext) {
  const std::vector<Sample> data = {scan_sample(64, 1)};
  TrainState s{Model<float>(tiny(), 4), {}, 0, 0};
  s.model.parameters()[0].value(0, 0) = std::numeric_limits<float>::quiet_NaN();
  try {
    train(s, data, {}, Strategy::S2, quick(2));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1 batch 1 lr"), std::string::npos) << msg;
  }
}

TEST(Train, RejectsMismatchedInputs) {
  const std::vector<Sample> data = {scan_sample(64, 1)};
  TrainState s{Model<float>(tiny(), 4), {}, 0, 0};
  EXPECT_THROW(train(s, {}, {}, Strategy::S2, quick(1)), InvalidArgument);
  EXPECT_THROW(train(s, data, {}, Strategy::S3, quick(1)), InvalidArgument);
  TrainConfig bad = quick(1);
  bad.class_weights = {{1.0, 1.0}};
  EXPECT_THROW(train(s, data, {}, Strategy::S2, bad), InvalidArgument);
}

TEST(Train, StopsOnceValidationTargetReached) {
  const std::vector<Sample> data = {scan_sample(64, 1)};
  TrainState s{Model<float>(tiny(), 4), {}, 0, 0};
  TrainConfig cfg = quick(5);
  cfg.stop_at_val_miou = 1e-9;
  EXPECT_EQ(train(s, data, data, Strategy::S2, cfg).size(), 1u);
  EXPECT_EQ(s.epoch, 1);
}

TEST(Train, LossDecreasesOnOneScene) {
  const std::vector<Sample> data = {scan_sample(256, 7)};
  TrainState s{Model<float>(tiny(), 2), {}, 0, 0};
  TrainConfig cfg = quick(10);
  cfg.batch_size = 1;
  const auto logs = train(s, data, {}, Strategy::S2, cfg);
  ASSERT_EQ(logs.size(), 10u);
  EXPECT_LT(logs.back().loss, 0.9 * logs.front().loss);
  for (std::size_t e = 1; e < logs.size(); ++e) EXPECT_LT(logs[e].loss, logs[e - 1].loss) << e;
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const std::vector<Sample> data = {scan_sample(80, 1), scan_sample(80, 2), scan_sample(80, 3)};
  ModelConfig mc = tiny(Backbone::SetHierarchy);
  mc.augment = true;
  const TrainConfig cfg = quick(4);

  TrainState full{Model<float>(mc, 9), {}, 0, 0};
  const auto full_logs = train(full, data, {data[1]}, Strategy::S2, cfg);

  struct Interrupt {};
  TrainState part{Model<float>(mc, 9), {}, 0, 0};
  EXPECT_THROW(train(part, data, {data[1]}, Strategy::S2, cfg,
                     [](const EpochLog& row) {
                       if (row.epoch == 2) throw Interrupt{};
                     }),
               Interrupt);
  const auto path = temp_path("resume.bin");
  save_checkpoint(path.string(), part, Strategy::S2);
  Checkpoint ck = load_checkpoint(path.string());
  fs::remove(path);
  EXPECT_EQ(ck.state.epoch, 2);
  const auto rest = train(ck.state, data, {data[1]}, Strategy::S2, cfg);
  ASSERT_EQ(rest.size(), 2u);
  EXPECT_EQ(rest[0].epoch, 3);
  EXPECT_EQ(log_row(rest[1]), log_row(full_logs[3]));
  EXPECT_TRUE(same_params(ck.state.model, full.model));
}

TEST(Checkpoint, RoundTripIsExact) {
  const std::vector<Sample> data = {scan_sample(64, 1)};
  ModelConfig mc = model_config_for(Strategy::S5, Backbone::EdgeConv);
  mc.feature_width = 10;
  mc.k_neighbors = 5;
  mc.radius = 0.123;
  TrainState s{Model<float>(mc, 3), {}, 0, 0};
  const std::vector<Sample> s5 = {{data[0].id, data[0].cloud, StrategyLabels::empty(Strategy::S5, 64)}};
  train(s, s5, {}, Strategy::S5, quick(1));

  const auto path = temp_path("roundtrip.bin");
  save_checkpoint(path.string(), s, Strategy::S5, {{"config_hash", "abc"}});
  Checkpoint ck = load_checkpoint(path.string());
  EXPECT_EQ(ck.strategy, Strategy::S5);
  EXPECT_EQ(ck.meta.at("config_hash"), "abc");
  EXPECT_EQ(ck.meta.at("version"), "0.1.0");
  EXPECT_TRUE(ck.state.model.config() == mc);
  EXPECT_EQ(ck.state.epoch, 1);
  EXPECT_EQ(ck.state.step, s.step);
  EXPECT_EQ(ck.state.opt.t, s.opt.t);
  EXPECT_TRUE(same_params(ck.state.model, s.model));
  ASSERT_EQ(ck.state.opt.m.size(), s.opt.m.size());
  for (std::size_t i = 0; i < s.opt.m.size(); ++i) {
    EXPECT_TRUE((ck.state.opt.m[i].array() == s.opt.m[i].array()).all());
    EXPECT_TRUE((ck.state.opt.v[i].array() == s.opt.v[i].array()).all());
  }

  // Saving the loaded state reproduces the file byte for byte.
  const auto again = temp_path("roundtrip2.bin");
  save_checkpoint(again.string(), ck.state, Strategy::S5, {{"config_hash", "abc"}});
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };
  EXPECT_EQ(slurp(path), slurp(again));
  fs::remove(path);
  fs::remove(again);
}

TEST(Checkpoint, CorruptFilesAreIoErrors) {
  const auto path = temp_path("garbage.bin");
  {
    std::ofstream f(path, std::ios::binary);
    f << "not a checkpoint at all";
  }
  EXPECT_THROW(load_checkpoint(path.string()), IoError);

  TrainState s{Model<float>(tiny(), 1), {}, 0, 0};
  save_checkpoint(path.string(), s, Strategy::S2);
  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), {});
  }
  EXPECT_NO_THROW(load_checkpoint(path.string()));
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{12}}) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(cut));
    f.close();
    EXPECT_THROW(load_checkpoint(path.string()), IoError) << cut;
  }
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << bytes << "x";
  }
  EXPECT_THROW(load_checkpoint(path.string()), IoError);
  fs::remove(path);
  EXPECT_THROW(load_checkpoint(path.string()), IoError);
}

TEST(Log, HeaderAndRowLayout) {
  EXPECT_EQ(log_header(Strategy::S2),
            "epoch,lr,loss,train_miou_body,train_miou_upper,train_miou_lower,train_avg_miou,"
            "val_miou_body,val_miou_upper,val_miou_lower,val_avg_miou");
  EpochLog row;
  row.epoch = 3;
  row.lr = 0.5;
  row.loss = 1.25;
  row.train_miou = {0.5, 0.25, std::nan("")};
  row.train_avg = 0.375;
  EXPECT_EQ(log_row(row), "3,0.5,1.25,0.5,0.25,nan,0.375,,,,");
  row.val_miou = {1, 1, 1};
  row.val_avg = 1.0;
  EXPECT_EQ(log_row(row), "3,0.5,1.25,0.5,0.25,nan,0.375,1,1,1,1");
}

}  // namespace
}  // namespace layerseg

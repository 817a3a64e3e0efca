#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "grad_check.hpp"
#include "layerseg/errors.hpp"
#include "layerseg/nn.hpp"
#include "layerseg/scan.hpp"

namespace layerseg {
namespace {

using namespace nn;
using testing::MatD;
using testing::rel_error;
using testing::random_cloud;
using testing::random_labels;
using testing::small_config;

constexpr std::array<Backbone, 3> kBackbones = {Backbone::SetHierarchy, Backbone::EdgeConv,
                                               Backbone::PointTransformer};

TEST(Heads, ShapesFollowStrategy) {
  const auto cloud = random_cloud(40, 1);
  Model<double> m2(small_config(Backbone::PointTransformer, Strategy::S2), 3);
  Tape<double> t;
  auto out = m2.forward(t, make_input<double>(cloud));
  ASSERT_EQ(out.size(), 3u);
  for (const auto& o : out) {
    EXPECT_EQ(o.rows(), 40);
    EXPECT_EQ(o.cols(), 2);
  }
  Model<double> m5(small_config(Backbone::PointTransformer, Strategy::S5), 3);
  Tape<double> t5;
  auto out5 = m5.forward(t5, make_input<double>(cloud));
  ASSERT_EQ(out5.size(), 3u);
  EXPECT_EQ(out5[0].cols(), 2);
  EXPECT_EQ(out5[1].cols(), 7);
  EXPECT_EQ(out5[2].cols(), 4);
  EXPECT_THROW(check_heads(m5.config(), Strategy::S2), InvalidArgument);
}

TEST(Heads, ZeroFeaturesGiveZeroLogits) {
  Model<double> m(small_config(Backbone::SetHierarchy), 5);
  for (auto& p : m.parameters()) {
    if (p.name.starts_with("head.") && p.name.ends_with(".b")) p.value.setZero();
  }
  Tape<double> t;
  auto out = m.heads(t, t.constant(MatD::Zero(10, 8)));
  for (const auto& o : out) EXPECT_EQ(o.value().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(m.heads(t, t.constant(MatD::Zero(10, 7))), InvalidArgument);
}

TEST(Backbone, ZeroWeightsGiveZeroFeatures) {
  const auto cloud = random_cloud(50, 2);
  for (Backbone b : kBackbones) {
    Model<double> m(small_config(b), 1);
    for (auto& p : m.parameters()) p.value.setZero();
    Tape<double> t;
    const auto f = m.backbone(t, make_input<double>(cloud));
    EXPECT_EQ(f.rows(), 50);
    EXPECT_EQ(f.cols(), 8);
    EXPECT_EQ(f.value().cwiseAbs().maxCoeff(), 0.0) << backbone_name(b);
  }
}

TEST(Backbone, TooFewPointsRejected) {
  for (Backbone b : kBackbones) {
    Model<double> m(small_config(b), 1);
    Tape<double> t;
    EXPECT_THROW(m.backbone(t, make_input<double>(random_cloud(5, 1))), InvalidArgument);
  }
  EXPECT_THROW(parse_backbone("mlp"), InvalidArgument);
  EXPECT_EQ(parse_backbone("edge"), Backbone::EdgeConv);
}

TEST(GradCheck, BackboneMeanFeature) {
  for (Backbone b : kBackbones) {
    for (int s = 0; s < 10; ++s) {
      const auto r = testing::backbone_probe(b, s);
      EXPECT_LT(r.worst, 1e-4) << backbone_name(b) << " seed " << s;
      EXPECT_TRUE(r.conclusive()) << r.checked << " checked, " << r.redrawn << " redrawn";
    }
  }
}

TEST(GradCheck, EndToEndLoss) {
  for (Backbone b : kBackbones) {
    for (int s = 0; s < 10; ++s) {
      const auto r = testing::end_to_end_probe(b, s);
      EXPECT_LT(r.worst, 1e-4) << backbone_name(b) << " seed " << s;
      EXPECT_TRUE(r.conclusive()) << r.checked << " checked, " << r.redrawn << " redrawn";
    }
  }
}

TEST(Loss, UniformLogitsGiveLogClassCount) {
  Tape<double> t;
  const auto gt = random_labels(Strategy::S5, 20, 1);
  std::vector<Var<double>> logits{t.constant(MatD::Zero(20, 2)), t.constant(MatD::Zero(20, 7)),
                                  t.constant(MatD::Zero(20, 4))};
  EXPECT_NEAR(multilayer_loss(logits, gt).value()(0, 0), std::log(2.0) + std::log(7.0) + std::log(4.0),
              1e-12);
  logits.pop_back();
  EXPECT_THROW(multilayer_loss(logits, gt), InvalidArgument);
}

TEST(Predict, ArgmaxTieRule) {
  MatD z(3, 2);
  z << 0.1, 2.0, 1.0, 1.0, 3.0, -1.0;
  EXPECT_EQ(argmax_rows(z), (std::vector<std::uint8_t>{1, 0, 0}));
}

LabeledScan sample_scan(std::size_t points) {
  SceneSpec spec;
  spec.upper = GarmentClass::TShirt;
  spec.lower = GarmentClass::LongPants;
  spec.overlap_band_m = 0.06;
  spec.pose_seed = 4;
  spec.shape_seed = 9;
  ScanConfig sc;
  sc.rays_per_view = 400;
  return resample(scan(sample_scene(spec), sc), points, 0);
}

TEST(Equivariance, PermutedInputPermutesOutput) {
  const auto s = sample_scan(300);
  std::vector<std::uint32_t> perm(s.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(17));
  const PointCloud shuffled = s.cloud.subset(perm);
  for (Backbone b : kBackbones) {
    ModelConfig cfg = model_config_for(Strategy::S2, b);
    cfg.feature_width = 32;
    Model<float> m(cfg, 21);
    const auto a = predict(m, s.cloud, Strategy::S2);
    const auto c = predict(m, shuffled, Strategy::S2);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
      for (std::size_t i = 0; i < perm.size(); ++i) {
        ASSERT_EQ(c.layers[l][i], a.layers[l][perm[i]]) << backbone_name(b) << " layer " << l;
      }
    }
    Tape<float> t1, t2;
    const auto fa = m.backbone(t1, make_input<float>(s.cloud)).value();
    const auto fc = m.backbone(t2, make_input<float>(shuffled)).value();
    for (std::size_t i = 0; i < perm.size(); ++i) {
      EXPECT_EQ(fc.row(static_cast<Eigen::Index>(i)), fa.row(perm[i])) << backbone_name(b);
    }
  }
}

TEST(Input, CentersAndCarriesNormals) {
  const auto c = random_cloud(30, 4);
  const auto in = make_input<double>(c);
  const Box box = bounds(in.positions);
  EXPECT_LT(box.center().norm(), 1e-12);
  EXPECT_EQ(in.features(3, 4), c.normals[3].y());
}

}  // namespace
}  // namespace layerseg

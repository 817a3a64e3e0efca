#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "grad_check.hpp"
#include "layerseg/autodiff.hpp"
#include "layerseg/errors.hpp"

namespace layerseg {
namespace {

using namespace ad;
using testing::check_gradients;
using testing::MatD;
using testing::random_mat;
using V = Var<double>;
using Leaves = std::vector<V>;

constexpr int kSeeds = 10;
constexpr double kTol = 1e-4;

TEST(Tape, LinearAndQuadraticExamples) {
  Tape<double> t;
  MatD x(1, 3);
  x << 1.5, -2.0, 0.25;
  MatD w0(1, 3);
  w0 << 0.3, 0.1, -0.7;
  V w = t.leaf(w0);
  t.backward(sum(mul(w, t.constant(x))));
  EXPECT_EQ(t.grad(w.id), x);

  Tape<double> q;
  MatD w1(1, 2);
  w1 << 1.0, 2.0;
  V v = q.leaf(w1);
  q.backward(sum(mul(v, v)));
  EXPECT_DOUBLE_EQ(q.grad(v.id)(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(q.grad(v.id)(0, 1), 4.0);
}

TEST(Tape, NonScalarLossRejected) {
  Tape<double> t;
  V a = t.leaf(MatD::Ones(2, 2));
  EXPECT_THROW(t.backward(a), InvalidArgument);
}

TEST(Tape, ParameterGradientsAccumulateAndRepeat) {
  std::mt19937_64 rng(1);
  Parameter<double> w{"w", random_mat(rng, 4, 3), {}};
  const MatD x = random_mat(rng, 5, 4);
  auto run = [&] {
    w.zero_grad();
    Tape<double> t;
    V p = t.param(w);
    // Same parameter used twice on one tape.
    t.backward(add(sum(relu(linear(t.constant(x), p))), sum(mul(p, p))));
    return MatD(w.grad);
  };
  const MatD g1 = run();
  const MatD g2 = run();
  EXPECT_EQ(g1, g2);
  EXPECT_TRUE(g1.allFinite());
}

class GradCheck : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradCheck, CentralDifferences) {
  const auto& c = testing::op_cases()[GetParam()];
  for (int s = 0; s < kSeeds; ++s) EXPECT_LT(testing::op_case_error(c, s), kTol) << c.name << " seed " << s;
}

INSTANTIATE_TEST_SUITE_P(Ops, GradCheck, ::testing::Range<std::size_t>(0, testing::op_cases().size()),
                         [](const auto& info) { return testing::op_cases()[info.param].name; });

TEST(CrossEntropy, UniformAndConfidentLogits) {
  const std::vector<std::uint8_t> labels{0, 1, 1, 0};
  Tape<double> t;
  V u = t.constant(MatD::Zero(4, 2));
  EXPECT_NEAR(cross_entropy(u, std::span<const std::uint8_t>(labels)).value()(0, 0), std::log(2.0), 1e-12);
  MatD z(4, 2);
  z << 40, 0, 0, 40, 0, 40, 40, 0;
  EXPECT_LT(cross_entropy(t.constant(z), std::span<const std::uint8_t>(labels)).value()(0, 0), 1e-15);
  const std::vector<std::uint8_t> bad{0, 5, 1, 0};
  EXPECT_THROW(cross_entropy(u, std::span<const std::uint8_t>(bad)), InvalidArgument);
  const std::vector<std::uint8_t> short_labels{0};
  EXPECT_THROW(cross_entropy(u, std::span<const std::uint8_t>(short_labels)), InvalidArgument);
}

TEST(Ops, ShapeErrors) {
  Tape<double> t;
  V a = t.leaf(MatD::Ones(3, 2));
  V b = t.leaf(MatD::Ones(2, 3));
  EXPECT_THROW(add(a, b), InvalidArgument);
  EXPECT_THROW(linear(a, a), InvalidArgument);
  EXPECT_THROW(group_max(a, 2), InvalidArgument);
  EXPECT_THROW(gather_rows(a, {3}), InvalidArgument);
}

TEST(Ops, GroupMaxTiesGoToFirstRow) {
  Tape<double> t;
  V a = t.leaf(MatD::Ones(4, 1));
  t.backward(sum(group_max(a, 4)));
  EXPECT_EQ(t.grad(a.id)(0, 0), 1.0);
  EXPECT_EQ(t.grad(a.id).sum(), 1.0);
}

}  // namespace
}  // namespace layerseg

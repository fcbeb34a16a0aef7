#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "i2md/error.hpp"
#include "i2md/grad_check.hpp"
#include "i2md/ops.hpp"

namespace i2md {
namespace {

using testing::random_tensor;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  Tensor t({2, 3}, std::vector<double>(6));
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
}

TEST(Tensor, CloneIsIndependentCopyIsAlias) {
  Tensor a({2}, {1.0, 2.0});
  Tensor alias = a;
  Tensor copy = a.clone();
  a.mutable_data()[0] = 5.0;
  EXPECT_EQ(alias[0], 5.0);
  EXPECT_EQ(copy[0], 1.0);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng(3);
  Tensor a = random_tensor({3, 3}, rng, false);
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor out = matmul(eye, a);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(out[i], a[i]);
}

TEST(Matmul, SmallProduct) {
  Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  Tensor b = Tensor::from_rows({{1}, {1}});
  Tensor out = matmul(a, b);
  ASSERT_EQ(out.shape(), (Shape{2, 1}));
  EXPECT_EQ(out[0], 3.0);
  EXPECT_EQ(out[1], 7.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(shape_string({2, 3})), std::string::npos) << msg;
    EXPECT_NE(msg.find(shape_string({4, 2})), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  auto r = grad_check([](const std::vector<Tensor>& x) { return sum(mul(matmul(x[0], x[1]), x[2])); },
                      {random_tensor({4, 5}, rng), random_tensor({5, 3}, rng), random_tensor({4, 3}, rng, false)},
                      1e-5, 1e-6);
  EXPECT_TRUE(r.passed) << r.max_error;
  EXPECT_LT(r.max_error, 1e-6);
}

TEST(Softmax, EqualInputsGiveUniform) {
  Tensor out = softmax(Tensor({4}, {2.5, 2.5, 2.5, 2.5}), 0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(out[i], 0.25);
}

TEST(Softmax, LogWeights) {
  Tensor out = softmax(Tensor({3}, {0.0, std::log(2.0), std::log(3.0)}), 0);
  EXPECT_NEAR(out[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(out[1], 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(out[2], 3.0 / 6.0, 1e-15);
}

TEST(Softmax, StableAtLargeLogits) {
  Tensor out = softmax(Tensor({2}, {1000.0, 999.0}), 0);
  EXPECT_NEAR(out[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Softmax, EmptyAxisIsDimensionError) { EXPECT_THROW(softmax(Tensor::zeros({2, 0}), 1), DimensionError); }

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  Tensor w = random_tensor({8}, rng, false);
  auto r = grad_check([&](const std::vector<Tensor>& x) { return sum(mul(softmax(x[0], 0), w)); },
                      {random_tensor({8}, rng)}, 1e-5, 1e-6);
  EXPECT_TRUE(r.passed) << r.max_error;
}

TEST(SoftmaxProperty, RowsArePositiveAndSumToOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Tensor p = softmax(random_tensor({5, 7}, rng, false, 20.0), 1);
    for (std::size_t r = 0; r < 5; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        const double v = p[r * 7 + c];
        EXPECT_GT(v, 0.0);
        EXPECT_LE(v, 1.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(L2Normalize, PythagoreanRow) {
  Tensor out = l2_normalize(Tensor({1, 2}, {3.0, 4.0}));
  EXPECT_NEAR(out[0], 0.6, 1e-15);
  EXPECT_NEAR(out[1], 0.8, 1e-15);
}

TEST(L2Normalize, UnitVectorIsFixedPoint) {
  Tensor u({1, 3}, {0.0, 1.0, 0.0});
  Tensor out = l2_normalize(u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(out[i], u[i]);
}

TEST(L2Normalize, ZeroRowIsDegenerate) {
  EXPECT_THROW(l2_normalize(Tensor({2, 2}, {1.0, 0.0, 0.0, 0.0})), DegenerateInputError);
}

TEST(L2Normalize, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  Tensor w = random_tensor({2, 16}, rng, false);
  auto r = grad_check([&](const std::vector<Tensor>& x) { return sum(mul(l2_normalize(x[0]), w)); },
                      {random_tensor({2, 16}, rng)}, 1e-5, 1e-6);
  EXPECT_TRUE(r.passed) << r.max_error;
}

TEST(Elementwise, ExpOfZeroIsOne) { EXPECT_EQ(exp(Tensor::scalar(0.0)).item(), 1.0); }

TEST(Elementwise, LogIsFlooredAndFloorHasZeroGradient) {
  Tensor x({2}, {0.0, 2.0}, true);
  Tensor y = log(x);
  EXPECT_NEAR(y[0], std::log(kLogFloor), 1e-12);
  sum(y).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.5);
}

TEST(Elementwise, GatherSelectsRows) {
  Tensor out = gather(Tensor({3}, {10, 20, 30}), std::vector<std::size_t>{2, 0});
  ASSERT_EQ(out.numel(), 2u);
  EXPECT_EQ(out[0], 30.0);
  EXPECT_EQ(out[1], 10.0);
}

TEST(Elementwise, GatherOutOfRangeThrows) {
  EXPECT_ANY_THROW(gather(Tensor({3}, {10, 20, 30}), std::vector<std::size_t>{3}));
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(mul(Tensor::zeros({2, 2}), Tensor::zeros({4})), DimensionError);
  EXPECT_THROW(add_row_bias(Tensor::zeros({2, 3}), Tensor::zeros({2})), DimensionError);
}

TEST(Elementwise, MeanReluComposite) {
  Rng rng(21);
  auto r = grad_check([](const std::vector<Tensor>& x) { return mean(relu(matmul(x[0], x[1]))); },
                      {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)});
  EXPECT_TRUE(r.passed) << r.max_error;
}

TEST(Elementwise, ReductionsAndLayout) {
  Tensor x = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(sum(x).item(), 21.0);
  EXPECT_EQ(mean(x).item(), 3.5);
  Tensor s = sum_last(x);
  EXPECT_EQ(s[0], 6.0);
  EXPECT_EQ(s[1], 15.0);
  Tensor t = transpose(x);
  ASSERT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(t[1], 4.0);
  std::vector<Tensor> parts{x, x};
  Tensor c = concat(parts, 0);
  ASSERT_EQ(c.shape(), (Shape{4, 3}));
  EXPECT_EQ(c[9], 4.0);
  Tensor n = narrow(x, 1, 1, 2);
  ASSERT_EQ(n.shape(), (Shape{2, 2}));
  EXPECT_EQ(n[2], 5.0);
  Tensor g = group_mean(x, 2);
  ASSERT_EQ(g.shape(), (Shape{1, 3}));
  EXPECT_EQ(g[0], 2.5);
}

TEST(GradCheck, QuadraticHasKnownGradient) {
  Tensor x({2}, {1.0, 2.0});
  auto r = grad_check([](const std::vector<Tensor>& v) { return sum(mul(v[0], v[0])); }, {x});
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_error, 1e-8);
  Tensor y({2}, {1.0, 2.0}, true);
  sum(mul(y, y)).backward();
  EXPECT_DOUBLE_EQ(y.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(y.grad()[1], 4.0);
}

TEST(GradCheck, NonScalarOutputIsContractError) {
  EXPECT_THROW(grad_check([](const std::vector<Tensor>& v) { return scale(v[0], 2.0); }, {Tensor({2}, {1.0, 2.0})}),
               ContractError);
}

// A gradient that ignores part of the dependence must be caught.
TEST(GradCheck, DetectsMissingGradientPath) {
  auto r = grad_check([](const std::vector<Tensor>& v) { return sum(mul(v[0], v[0].detach())); },
                      {Tensor({3}, {1.0, -2.0, 0.5})});
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_error, 0.1);
}

TEST(GradCheck, LeavesCallerInputsUntouched) {
  Tensor x({2}, {1.0, 2.0}, true);
  grad_check([](const std::vector<Tensor>& v) { return sum(exp(v[0])); }, {x});
  EXPECT_FALSE(x.has_grad());
  EXPECT_EQ(x[0], 1.0);
}

TEST(Autodiff, LeafGradientsAccumulateUntilZeroed) {
  Tensor x({2}, {1.0, 3.0}, true);
  sum(scale(x, 2.0)).backward();
  sum(scale(x, 2.0)).backward();
  EXPECT_EQ(x.grad()[0], 4.0);
  x.zero_grad();
  sum(scale(x, 2.0)).backward();
  EXPECT_EQ(x.grad()[1], 2.0);
}

TEST(Autodiff, SharedSubexpressionIsVisitedOnce) {
  Tensor x({1}, {3.0}, true);
  Tensor y = mul(x, x);       // dy/dx = 6
  sum(add(y, y)).backward();  // d/dx 2y = 12
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Autodiff, NoGraphWithoutRequiresGrad) {
  Tensor a({2}, {1.0, 2.0});
  Tensor b = exp(a);
  EXPECT_TRUE(b.is_leaf());
  EXPECT_FALSE(b.requires_grad());
  EXPECT_THROW(sum(b).backward(), ContractError);
}

TEST(Autodiff, DetachBlocksGradient) {
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor w({2}, {5.0, 7.0}, true);
  sum(mul(x.detach(), w)).backward();
  EXPECT_FALSE(x.has_grad());
  EXPECT_TRUE(w.has_grad());
}

TEST(Autodiff, BackwardRequiresScalar) {
  Tensor x({2}, {1.0, 2.0}, true);
  EXPECT_THROW(scale(x, 2.0).backward(), ContractError);
}

TEST(Autodiff, GradientShapeMatchesData) {
  Rng rng(2);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  sum(matmul(a, b)).backward();
  EXPECT_EQ(a.grad().size(), a.numel());
  EXPECT_EQ(b.grad().size(), b.numel());
}

// Randomized shapes through each elementwise/layout op, 20 seeds.
TEST(AutodiffProperty, OpsPassGradCheckOnRandomShapes) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const std::size_t m = 1 + rng() % 4, n = 1 + rng() % 5;
    Tensor w = random_tensor({m, n}, rng, false);
    auto check = [&](const char* name, const ScalarFunction& f, std::vector<Tensor> in) {
      auto r = grad_check(f, in);
      EXPECT_TRUE(r.passed) << name << " seed " << seed << " err " << r.max_error;
    };
    check("sub", [&](auto& x) { return sum(mul(sub(x[0], x[1]), w)); },
          {random_tensor({m, n}, rng), random_tensor({m, n}, rng)});
    check("exp", [&](auto& x) { return sum(mul(exp(x[0]), w)); }, {random_tensor({m, n}, rng)});
    check("log_softmax", [&](auto& x) { return sum(mul(log_softmax(x[0], 1), w)); }, {random_tensor({m, n}, rng)});
    check("transpose", [&](auto& x) { return sum(mul(transpose(transpose(x[0])), w)); },
          {random_tensor({m, n}, rng)});
    check("layer_norm",
          [&](auto& x) { return sum(mul(layer_norm(x[0], x[1], x[2]), w)); },
          {random_tensor({m, n}, rng), random_tensor({n}, rng), random_tensor({n}, rng)});
  }
}

}  // namespace
}  // namespace i2md

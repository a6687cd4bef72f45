#include <gtest/gtest.h>

#include <cmath>

#include "mvam/error.hpp"
#include "mvam/grad_check.hpp"
#include "mvam/ops.hpp"
#include "oracles.hpp"

namespace mvam {
namespace {

using testing::Rng;
using testing::random_tensor;

void expect_values(const Tensor& t, std::vector<double> expected, double tol = 0.0) {
  ASSERT_EQ(t.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_NEAR(t.at(i), expected[i], tol) << "index " << i;
  }
}

TEST(Tensor, ShapeInvariants) {
  Tensor t = Tensor::zeros({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_FALSE(t.has_grad());
  EXPECT_THROW(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(Tensor::zeros({}), ShapeError);
  EXPECT_THROW(Tensor::zeros({2, 0}), ShapeError);
}

TEST(Tensor, HandlesAliasAndCloneCopies) {
  Tensor a = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor alias = a;
  alias.mutable_data()[0] = 5.0;
  EXPECT_EQ(a.at(0), 5.0);
  Tensor copy = a.clone();
  copy.mutable_data()[0] = -1.0;
  EXPECT_EQ(a.at(0), 5.0);
  EXPECT_TRUE(copy.requires_grad());
  EXPECT_FALSE(a.detach().requires_grad());
  EXPECT_FALSE(copy.same_storage(a));
}

TEST(Matmul, Examples) {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {1, 1});
  expect_values(matmul(a, b), {3, 7});

  Rng rng(1);
  Tensor x = random_tensor(rng, {2, 5});
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor y = matmul(eye, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.at(i), x.at(i));

  try {
    matmul(a, Tensor::zeros({3, 1}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("[2x2]"), std::string::npos) << what;
    EXPECT_NE(what.find("[3x1]"), std::string::npos) << what;
  }
}

TEST(Matmul, SortedSummationIsPermutationInvariant) {
  Rng rng(2);
  Tensor a = random_tensor(rng, {3, 7}, -1e3, 1e3);
  Tensor b = random_tensor(rng, {7, 2}, -1e-3, 1e-3);
  std::vector<std::size_t> perm = {3, 0, 6, 1, 5, 2, 4};
  std::vector<double> ap(a.size()), bp(b.size());
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < 7; ++p) ap[i * 7 + p] = a.at(i, perm[p]);
  for (std::size_t p = 0; p < 7; ++p)
    for (std::size_t j = 0; j < 2; ++j) bp[p * 2 + j] = b.at(perm[p], j);
  Tensor c1 = matmul(a, b, Summation::kSorted);
  Tensor c2 = matmul(Tensor::from({3, 7}, ap), Tensor::from({7, 2}, bp), Summation::kSorted);
  for (std::size_t i = 0; i < c1.size(); ++i) EXPECT_EQ(c1.at(i), c2.at(i));
  Tensor plain = matmul(a, b);
  for (std::size_t i = 0; i < c1.size(); ++i) EXPECT_NEAR(c1.at(i), plain.at(i), 1e-9);
}

TEST(Backward, Examples) {
  Tensor x = Tensor::from({3}, {1, -2, 4}, true);
  backward(sum(x));
  expect_values(Tensor::from({3}, std::vector<double>(x.grad().begin(), x.grad().end())),
                {1, 1, 1});

  Tensor y = Tensor::from({2}, {1, 2}, true);
  backward(sum(mul(y, y)));
  EXPECT_EQ(y.grad()[0], 2.0);
  EXPECT_EQ(y.grad()[1], 4.0);

  EXPECT_THROW(backward(y), ShapeError);
}

TEST(Backward, FanOutAccumulatesBySummation) {
  Tensor x = Tensor::from({2}, {3, 5}, true);
  Tensor loss = add(sum(x), sum(scale(x, 2.0)));
  backward(loss);
  EXPECT_EQ(x.grad()[0], 3.0);
  EXPECT_EQ(x.grad()[1], 3.0);
}

TEST(Backward, RepeatRejectedUnlessAllowed) {
  Tensor x = Tensor::from({1}, {2.0}, true);
  Tensor loss = sum(mul(x, x));
  backward(loss);
  EXPECT_THROW(backward(loss), Error);
  backward(loss, {.allow_repeat = true});
  EXPECT_EQ(x.grad()[0], 8.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_mode_enabled());
    Tensor y = sum(mul(x, x));
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(grad_mode_enabled());
  EXPECT_TRUE(sum(x).requires_grad());
}

TEST(Backward, EveryReachableLeafGetsAGrad) {
  Tensor a = Tensor::from({2}, {1, 2}, true);
  Tensor b = Tensor::from({2}, {0, 0}, true);  // zero contribution still counts
  Tensor unused = Tensor::from({2}, {1, 1}, true);
  backward(sum(add(a, mul(b, Tensor::scalar(0.0)))));
  EXPECT_TRUE(a.has_grad());
  EXPECT_TRUE(b.has_grad());
  EXPECT_FALSE(unused.has_grad());
}

TEST(GradCheck, QuadraticIsExactUpToRounding) {
  Rng rng(3);
  Tensor w = random_tensor(rng, {3, 2});
  std::vector<NamedTensor> params{{"w", w}};
  auto report = grad_check([&] { return sum(mul(w, w)); }, params, 1e-5);
  EXPECT_TRUE(report.passed());
  EXPECT_LT(report.max_relative_error(), 1e-8);
}

TEST(GradCheck, ZeroFunctionPassesThroughFloor) {
  Tensor w = Tensor::from({2}, {0.5, -0.5}, true);
  std::vector<NamedTensor> params{{"w", w}};
  auto report = grad_check([&] { return scale(sum(w), 0.0); }, params, 1e-5);
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(report.max_relative_error(), 0.0);
}

TEST(GradCheck, RejectsBadStepAndNonFiniteLoss) {
  Tensor w = Tensor::from({1}, {1.0}, true);
  std::vector<NamedTensor> params{{"w", w}};
  EXPECT_THROW(grad_check([&] { return sum(w); }, params, 1e-2), ConfigError);
  EXPECT_THROW(grad_check([&] { return sum(w); }, params, 1e-9), ConfigError);
  EXPECT_THROW(grad_check([&] { return scale(sum(w), INFINITY); }, params, 1e-5),
               NumericError);
}

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-10, 0.0), 1e-10 / 1e-8);
}

}  // namespace
}  // namespace mvam

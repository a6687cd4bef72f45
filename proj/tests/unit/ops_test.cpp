#include <gtest/gtest.h>

#include <cmath>

#include "mvam/error.hpp"
#include "mvam/ops.hpp"
#include "oracles.hpp"

namespace mvam {
namespace {

using testing::Rng;
using testing::max_relative_error;
using testing::numeric_gradient;
using testing::random_tensor;

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(Conv1d, Examples) {
  Tensor identity = conv1d_same(Tensor::from({1, 3}, {1, 2, 3}), Tensor::from({1, 1, 1}, {1}),
                                Tensor::zeros({1}), Activation::kIdentity);
  EXPECT_EQ(values(identity), (std::vector<double>{1, 2, 3}));

  Tensor k2 = conv1d_same(Tensor::from({1, 3}, {1, 2, 3}), Tensor::from({2, 1, 1}, {1, 1}),
                          Tensor::zeros({1}), Activation::kIdentity);
  EXPECT_EQ(values(k2), (std::vector<double>{3, 5, 3}));

  Rng rng(4);
  Tensor out = conv1d_same(random_tensor(rng, {3, 5}), Tensor::zeros({4, 3, 2}),
                           Tensor::from({2}, {0.25, -1.5}), Activation::kIdentity);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(out.at(0, i), 0.25);
    EXPECT_EQ(out.at(1, i), -1.5);
  }
}

TEST(Conv1d, PreservesLengthForAllSmallShapes) {
  Rng rng(5);
  for (std::size_t n = 1; n <= 64; ++n) {
    for (std::size_t k = 1; k <= 12; ++k) {
      Tensor out = conv1d_same(random_tensor(rng, {2, n}, -1, 1, false),
                               random_tensor(rng, {k, 2, 3}, -1, 1, false),
                               Tensor::zeros({3}), Activation::kTanh);
      ASSERT_EQ(out.shape(), (Shape{3, n})) << "n=" << n << " k=" << k;
    }
  }
}

TEST(Conv1d, EvenKernelPadsMoreOnTheRight) {
  // k = 4: left pad 1, right pad 2. Column i sees inputs i-1 .. i+2.
  Tensor in = Tensor::from({1, 4}, {1, 10, 100, 1000});
  Tensor kernel = Tensor::from({4, 1, 1}, {1, 1, 1, 1});
  Tensor out = conv1d_same(in, kernel, Tensor::zeros({1}), Activation::kIdentity);
  EXPECT_EQ(values(out), (std::vector<double>{111, 1111, 1110, 1100}));
}

TEST(Conv1d, RejectsMismatchedKernel) {
  EXPECT_THROW(conv1d_same(Tensor::zeros({2, 3}), Tensor::zeros({3, 4, 1}), Tensor::zeros({1}),
                           Activation::kTanh),
               ShapeError);
}

TEST(Softmax, Examples) {
  Tensor uniform = softmax_rows(Tensor::full({1, 4}, 2.5));
  for (double v : values(uniform)) EXPECT_DOUBLE_EQ(v, 0.25);
  Tensor two = softmax_rows(Tensor::from({1, 2}, {0.0, std::log(3.0)}));
  EXPECT_NEAR(two.at(0), 0.25, 1e-15);
  EXPECT_NEAR(two.at(1), 0.75, 1e-15);
  EXPECT_EQ(softmax_rows(Tensor::from({1, 1}, {-7.0})).at(0), 1.0);
}

TEST(Softmax, MaskedEntriesAreExactlyZero) {
  std::vector<std::uint8_t> mask = {1, 0, 1, 0, 0, 1};
  Tensor y = softmax_rows(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}), Mask(mask));
  EXPECT_EQ(y.at(0, 1), 0.0);
  EXPECT_EQ(y.at(1, 0), 0.0);
  EXPECT_EQ(y.at(1, 1), 0.0);
  EXPECT_EQ(y.at(1, 2), 1.0);
  EXPECT_NEAR(y.at(0, 0) + y.at(0, 2), 1.0, 1e-15);

  std::vector<std::uint8_t> none = {0, 0};
  EXPECT_THROW(softmax_rows(Tensor::zeros({1, 2}), Mask(none)), Error);
}

TEST(Softmax, RowsAreStochasticOnRandomInput) {
  Rng rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = rng.index(1, 40);
    Tensor x = random_tensor(rng, {1, c}, -50, 50, false);
    Tensor y = softmax_rows(x);
    double total = 0.0;
    for (double v : values(y)) {
      ASSERT_GE(v, 0.0);
      total += v;
    }
    ASSERT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(LayerNorm, Examples) {
  Tensor gain = Tensor::full({3}, 1.0), bias = Tensor::zeros({3});
  for (double v : values(layer_normalize(Tensor::full({1, 3}, 4.0), gain, bias, 1e-5))) {
    EXPECT_EQ(v, 0.0);
  }
  Tensor two = layer_normalize(Tensor::from({1, 2}, {1, 3}), Tensor::full({2}, 1.0),
                               Tensor::zeros({2}), 1e-12);
  EXPECT_NEAR(two.at(0), -1.0, 1e-10);
  EXPECT_NEAR(two.at(1), 1.0, 1e-10);
  Tensor shifted = layer_normalize(Tensor::from({1, 3}, {1, 5, -2}), Tensor::zeros({3}),
                                   Tensor::from({3}, {7, 8, 9}), 1e-5);
  EXPECT_EQ(values(shifted), (std::vector<double>{7, 8, 9}));
  EXPECT_THROW(layer_normalize(Tensor::zeros({2, 1}), Tensor::full({1}, 1.0),
                               Tensor::zeros({1}), 1e-5),
               ShapeError);
}

TEST(BatchNorm, StandardisesColumns) {
  Tensor y = batch_normalize(Tensor::from({2, 2}, {1, 10, 3, 30}), Tensor::full({2}, 1.0),
                             Tensor::zeros({2}), 1e-12);
  EXPECT_NEAR(y.at(0, 0), -1.0, 1e-10);
  EXPECT_NEAR(y.at(1, 0), 1.0, 1e-10);
  EXPECT_NEAR(y.at(0, 1), -1.0, 1e-10);
  EXPECT_NEAR(y.at(1, 1), 1.0, 1e-10);
}

TEST(Pointwise, Examples) {
  EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_EQ(values(relu(Tensor::from({3}, {-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
  Tensor saturated = sigmoid(Tensor::from({2}, {1e4, -1e4}));
  EXPECT_LT(saturated.at(0), 1.0);
  EXPECT_GT(saturated.at(1), 0.0);
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
  EXPECT_EQ(values(add(Tensor::from({2}, {1, 2}), Tensor::scalar(1.0))),
            (std::vector<double>{2, 3}));
}

TEST(Dropout, IdentityCasesAndValidation) {
  Rng rng(7);
  Tensor x = random_tensor(rng, {4, 5});
  EXPECT_TRUE(dropout(x, 0.0, 1, true).same_storage(x));
  EXPECT_TRUE(dropout(x, 0.7, 1, false).same_storage(x));
  EXPECT_THROW(dropout(x, 1.0, 1, true), ConfigError);
  EXPECT_THROW(dropout(x, -0.1, 1, true), ConfigError);
}

TEST(Dropout, DeterministicAndUnbiased) {
  Tensor x = Tensor::full({1, 100000}, 2.0);
  Tensor a = dropout(x, 0.6, 99, true);
  Tensor b = dropout(x, 0.6, 99, true);
  EXPECT_EQ(values(a), values(b));
  double mean = 0.0;
  for (double v : values(a)) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 5.0) < 1e-12);
    mean += v;
  }
  mean /= 100000.0;
  EXPECT_NEAR(mean, 2.0, 0.02);
}

TEST(Embedding, PadIsZeroAndGetsNoGradient) {
  Tensor table = Tensor::from({3, 2}, {9, 9, 1, 2, 3, 4}, true);
  std::vector<std::int32_t> ids = {2, 0, 1, 2};
  Tensor cols = embedding_columns(table, ids, 0);
  ASSERT_EQ(cols.shape(), (Shape{2, 4}));
  EXPECT_EQ(cols.at(0, 0), 3.0);
  EXPECT_EQ(cols.at(0, 1), 0.0);
  EXPECT_EQ(cols.at(1, 1), 0.0);
  backward(sum(cols));
  EXPECT_EQ(table.grad()[0], 0.0);
  EXPECT_EQ(table.grad()[1], 0.0);
  EXPECT_EQ(table.grad()[4], 2.0);
  std::vector<std::int32_t> bad = {3};
  EXPECT_THROW(embedding_columns(table, bad, 0), DataError);
}

TEST(BinaryCrossEntropy, Examples) {
  EXPECT_NEAR(binary_cross_entropy(Tensor::full({1, 1}, 0.5), Tensor::full({1, 1}, 1.0)).item(),
              std::log(2.0), 1e-15);
  EXPECT_NEAR(binary_cross_entropy(Tensor::full({1, 1}, 0.25), Tensor::full({1, 1}, 1.0)).item(),
              std::log(4.0), 1e-15);
  Tensor truth = Tensor::from({2, 2}, {1, 0, 0, 1});
  EXPECT_NEAR(binary_cross_entropy(truth, truth).item(), 0.0, 1e-11);
  // Summed over labels, averaged over rows.
  EXPECT_NEAR(binary_cross_entropy(Tensor::full({2, 3}, 0.5), Tensor::zeros({2, 3})).item(),
              3.0 * std::log(2.0), 1e-14);
  EXPECT_THROW(binary_cross_entropy(Tensor::zeros({2, 2}), Tensor::zeros({2, 3})), ShapeError);
}

// Every differentiable op against central differences on random inputs.
struct OpCase {
  const char* name;
  std::function<Tensor(const std::vector<Tensor>&)> build;
  std::vector<Shape> shapes;
  double lo = -1.0;
  double hi = 1.0;
};

class OpGradient : public ::testing::TestWithParam<int> {};

std::vector<OpCase> op_cases() {
  static std::vector<std::uint8_t> mask = {1, 0, 1, 1, 1, 1, 0, 1};
  static std::vector<std::int32_t> ids = {3, 1, 0, 3, 2};
  return {
      {"matmul", [](auto& in) { return matmul(in[0], in[1]); }, {{3, 4}, {4, 2}}},
      {"matmul_sorted",
       [](auto& in) { return matmul(in[0], in[1], Summation::kSorted); },
       {{3, 4}, {4, 2}}},
      {"transpose", [](auto& in) { return mul(transpose(in[0]), in[1]); }, {{2, 3}, {3, 2}}},
      {"add", [](auto& in) { return add(in[0], in[1]); }, {{2, 3}, {2, 3}}},
      {"add_scalar", [](auto& in) { return add(in[0], in[1]); }, {{2, 3}, {1}}},
      {"mul", [](auto& in) { return mul(in[0], in[1]); }, {{2, 3}, {2, 3}}},
      {"mul_scalar", [](auto& in) { return mul(in[1], in[0]); }, {{2, 3}, {1}}},
      {"scale", [](auto& in) { return scale(in[0], -1.75); }, {{4}}},
      {"add_bias", [](auto& in) { return add_bias(in[0], in[1]); }, {{3, 2}, {2}}},
      {"relu", [](auto& in) { return relu(in[0]); }, {{2, 4}}},
      {"tanh", [](auto& in) { return tanh(in[0]); }, {{2, 4}}},
      {"sigmoid", [](auto& in) { return sigmoid(in[0]); }, {{2, 4}}, -4, 4},
      {"dropout", [](auto& in) { return dropout(in[0], 0.4, 11, true); }, {{3, 5}}},
      {"softmax", [](auto& in) { return softmax_rows(in[0]); }, {{2, 4}}, -3, 3},
      {"softmax_masked",
       [](auto& in) { return softmax_rows(in[0], Mask(mask)); }, {{2, 4}}, -3, 3},
      {"softmax_sorted",
       [](auto& in) { return softmax_rows(in[0], std::nullopt, Summation::kSorted); },
       {{2, 4}}, -3, 3},
      {"layer_norm",
       [](auto& in) { return layer_normalize(in[0], in[1], in[2], 1e-5); },
       {{3, 4}, {4}, {4}}},
      {"batch_norm",
       [](auto& in) { return batch_normalize(in[0], in[1], in[2], 1e-5); },
       {{3, 4}, {4}, {4}}},
      {"conv_tanh",
       [](auto& in) { return conv1d_same(in[0], in[1], in[2], Activation::kTanh); },
       {{3, 6}, {4, 3, 2}, {2}}},
      {"conv_relu",
       [](auto& in) { return conv1d_same(in[0], in[1], in[2], Activation::kRelu); },
       {{2, 5}, {3, 2, 3}, {3}}},
      {"embedding", [](auto& in) { return embedding_columns(in[0], ids, 0); }, {{4, 3}}},
      {"sum_rows", [](auto& in) { return sum_rows(in[0]); }, {{3, 4}}},
      {"stack_rows",
       [](auto& in) {
         std::vector<Tensor> rows = {in[0], in[1]};
         return stack_rows(rows);
       },
       {{3}, {3}}},
      {"bce",
       [](auto& in) {
         static Tensor truth = Tensor::from({2, 3}, {1, 0, 1, 0, 0, 1});
         return binary_cross_entropy(sigmoid(in[0]), truth);
       },
       {{2, 3}}, -2, 2},
  };
}

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const OpCase c = op_cases()[static_cast<std::size_t>(GetParam())];
  Rng rng(100 + static_cast<std::uint64_t>(GetParam()));
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> inputs;
    for (const Shape& s : c.shapes) inputs.push_back(random_tensor(rng, s, c.lo, c.hi));
    // A fixed random projection turns any output into a scalar.
    Tensor out = c.build(inputs);
    Tensor weights = random_tensor(rng, out.shape(), -1, 1, false);
    auto loss = [&] { return sum(mul(c.build(inputs), weights)); };
    backward(loss());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      auto numeric = numeric_gradient(
          [&] {
            NoGradGuard guard;
            return loss().item();
          },
          inputs[i]);
      const double err = max_relative_error(inputs[i].grad(), numeric);
      EXPECT_LT(err, 1e-4) << c.name << " input " << i << " trial " << trial;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient,
                         ::testing::Range(0, static_cast<int>(op_cases().size())),
                         [](const ::testing::TestParamInfo<int>& info) {
                           return std::string(op_cases()[static_cast<std::size_t>(info.param)].name);
                         });

}  // namespace
}  // namespace mvam

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "scavit/errors.hpp"
#include "scavit/graph.hpp"
#include "scavit/ops.hpp"
#include "test_util.hpp"

using namespace scavit;
using scavit::testing::max_grad_error;
using scavit::testing::random_tensor;

namespace {

constexpr double kTol = 1e-6;

}  // namespace

TEST(Tensor, RejectsSizeMismatchAndNonFinite) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor({1}, {std::numeric_limits<double>::quiet_NaN()}), ValueError);
  EXPECT_THROW(Tensor({1}, {std::numeric_limits<double>::infinity()}), ValueError);
  EXPECT_NO_THROW(Tensor({2, 2}, {1, 2, 3, 4}));
}

TEST(Tensor, GradBufferLifecycle) {
  Tensor t = Tensor::zeros({3}, true);
  EXPECT_FALSE(t.has_grad());
  t.accumulate_grad(std::vector<double>{1, 2, 3});
  t.accumulate_grad(std::vector<double>{1, 1, 1});
  EXPECT_EQ(t.grad()[2], 4.0);
  t.zero_grad();
  EXPECT_TRUE(t.has_grad());
  EXPECT_EQ(t.grad()[0], 0.0);
}

TEST(Graph, BackwardErrors) {
  Graph g;
  Tensor x = Tensor::filled({2}, 1.0, true);
  Var v = g.param(x);
  EXPECT_THROW(g.backward(v), ShapeError);
  Graph other;
  Var s = ops::sum(g.param(x));
  EXPECT_THROW(other.backward(s), ValueError);
}

TEST(Graph, AccumulatesAcrossUsesAndBackwards) {
  Tensor x({1}, {3.0}, true);
  for (int pass = 0; pass < 2; ++pass) {
    Graph g;
    Var a = g.param(x);
    // y = x * x + x  -> dy/dx = 2x + 1 = 7
    g.backward(ops::sum(ops::add(ops::mul(a, a), a)));
  }
  EXPECT_DOUBLE_EQ(x.grad()[0], 14.0);
}

TEST(Graph, ConstantsAndFrozenTensorsGetNoGrad) {
  Tensor frozen({2}, {1.0, 2.0}, false);
  Tensor live({2}, {3.0, 4.0}, true);
  Graph g;
  g.backward(ops::sum(ops::mul(g.param(frozen), g.param(live))));
  EXPECT_FALSE(frozen.has_grad());
  EXPECT_EQ(live.grad()[0], 1.0);
  EXPECT_EQ(live.grad()[1], 2.0);
}

TEST(Graph, InferenceGraphRecordsNoGradients) {
  Tensor x({1}, {2.0}, true);
  Graph g(false);
  Var y = ops::sum(ops::mul(g.param(x), g.param(x)));
  EXPECT_EQ(y.value().item(), 4.0);
  EXPECT_FALSE(g.needs_grad(y));
  g.backward(y);
  EXPECT_FALSE(x.has_grad());
}

TEST(Ops, MatmulMatchesNaiveProduct) {
  Rng rng(1);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
  Graph g(false);
  const Tensor& c = ops::matmul(g.param(a), g.param(b)).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double want = 0.0;
      for (std::size_t k = 0; k < 4; ++k) want += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), want, 1e-12);
    }
  EXPECT_THROW(ops::matmul(g.param(a), g.param(a)), ShapeError);
}

TEST(Ops, SoftmaxRowsSumToOneAndSurviveLargeLogits) {
  Tensor x({2, 3}, {1000.0, 1001.0, 999.0, -5.0, 0.0, 5.0});
  Graph g(false);
  const Tensor& y = ops::softmax_lastdim(g.constant(x)).value();
  for (std::size_t r = 0; r < 2; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_TRUE(std::isfinite(y.at(r, c)));
      total += y.at(r, c);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Ops, LayerNormNormalizesRows) {
  Rng rng(2);
  Tensor x = random_tensor({4, 8}, rng, 3.0);
  Tensor gamma = Tensor::filled({8}, 1.0), beta = Tensor::zeros({8});
  Graph g(false);
  const Tensor& y =
      ops::layer_norm(g.constant(x), g.constant(gamma), g.constant(beta), 1e-12).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 8; ++c) mu += y.at(r, c) / 8.0;
    for (std::size_t c = 0; c < 8; ++c) var += (y.at(r, c) - mu) * (y.at(r, c) - mu) / 8.0;
    EXPECT_NEAR(mu, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-9);
  }
  Tensor narrow = Tensor::zeros({2, 1});
  EXPECT_THROW(ops::layer_norm(g.constant(narrow), g.constant(Tensor::zeros({1})),
                               g.constant(Tensor::zeros({1})), 1e-5),
               ShapeError);
}

TEST(Ops, CrossEntropyExamples) {
  Graph g(false);
  const int labels[] = {0};
  EXPECT_NEAR(ops::cross_entropy(g.constant(Tensor({1, 2}, {0.3, 0.3})), labels).value().item(),
              std::log(2.0), 1e-15);
  const int one[] = {1};
  EXPECT_LT(ops::cross_entropy(g.constant(Tensor({1, 2}, {0.0, 20.0})), one).value().item(), 1e-8);
  const int bad[] = {2};
  EXPECT_THROW(ops::cross_entropy(g.constant(Tensor({1, 2}, {0.0, 0.0})), bad), ValueError);
}

TEST(Ops, CrossEntropyGradientIsSoftmaxMinusOnehot) {
  Tensor logits({2, 3}, {0.1, -0.4, 2.0, 1.0, 0.5, -1.0}, true);
  const int labels[] = {2, 0};
  Graph g;
  g.backward(ops::cross_entropy(g.param(logits), labels));
  for (std::size_t r = 0; r < 2; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 3; ++c) total += std::exp(logits.at(r, c));
    for (std::size_t c = 0; c < 3; ++c) {
      const double p = std::exp(logits.at(r, c)) / total;
      const double onehot = static_cast<int>(c) == labels[r] ? 1.0 : 0.0;
      EXPECT_NEAR(logits.grad()[r * 3 + c], (p - onehot) / 2.0, 1e-14);
    }
  }
}

TEST(Ops, DropoutIsIdentityOutsideTrainingAndScalesKeptUnits) {
  Rng rng(3);
  Tensor x = Tensor::filled({1000}, 1.0);
  Graph g(false);
  Var in = g.constant(x);
  EXPECT_EQ(ops::dropout(in, 0.5, false, rng).id(), in.id());
  EXPECT_EQ(ops::dropout(in, 0.0, true, rng).id(), in.id());
  const Tensor& y = ops::dropout(in, 0.25, true, rng).value();
  std::size_t kept = 0;
  for (double v : y.values()) {
    if (v != 0.0) {
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
      ++kept;
    }
  }
  EXPECT_NEAR(static_cast<double>(kept) / 1000.0, 0.75, 0.05);
  EXPECT_THROW(ops::dropout(in, 1.0, true, rng), ValueError);
}

TEST(Ops, GatherRowsValidatesIndices) {
  Graph g(false);
  Var x = g.constant(Tensor::zeros({3, 2}));
  const std::size_t out_of_range[] = {3};
  const std::size_t duplicate[] = {1, 1};
  EXPECT_THROW(ops::gather_rows(x, out_of_range), ValueError);
  EXPECT_THROW(ops::gather_rows(x, duplicate), ValueError);
}

// Every differentiable op against central differences.
struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  scavit::testing::GraphFn fn;
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const OpCase& c = GetParam();
  Rng rng(11);
  std::vector<Tensor> inputs;
  for (const Shape& s : c.shapes) inputs.push_back(random_tensor(s, rng));
  EXPECT_LT(max_grad_error(c.fn, inputs, rng), kTol) << c.name;
}

using V = std::vector<Var>;

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradient,
    ::testing::Values(
        OpCase{"matmul", {{3, 4}, {4, 2}}, [](Graph&, V& v) { return ops::matmul(v[0], v[1]); }},
        OpCase{"transpose", {{3, 4}}, [](Graph&, V& v) { return ops::transpose(v[0]); }},
        OpCase{"reshape", {{3, 4}}, [](Graph&, V& v) { return ops::reshape(v[0], {2, 6}); }},
        OpCase{"add", {{2, 3}, {2, 3}}, [](Graph&, V& v) { return ops::add(v[0], v[1]); }},
        OpCase{"sub", {{2, 3}, {2, 3}}, [](Graph&, V& v) { return ops::sub(v[0], v[1]); }},
        OpCase{"mul", {{2, 3}, {2, 3}}, [](Graph&, V& v) { return ops::mul(v[0], v[1]); }},
        OpCase{"scale", {{2, 3}}, [](Graph&, V& v) { return ops::scale(v[0], -1.7); }},
        OpCase{"add_bias", {{3, 4}, {4}}, [](Graph&, V& v) { return ops::add_bias(v[0], v[1]); }},
        OpCase{"mul_columns",
               {{3, 4}, {4}},
               [](Graph&, V& v) { return ops::mul_columns(v[0], v[1]); }},
        OpCase{"mul_rows", {{3, 4}, {3}}, [](Graph&, V& v) { return ops::mul_rows(v[0], v[1]); }},
        OpCase{"softmax", {{3, 5}}, [](Graph&, V& v) { return ops::softmax_lastdim(v[0]); }},
        OpCase{"layer_norm",
               {{3, 6}, {6}, {6}},
               [](Graph&, V& v) { return ops::layer_norm(v[0], v[1], v[2], 1e-5); }},
        OpCase{"linear",
               {{3, 4}, {4, 2}, {2}},
               [](Graph&, V& v) { return ops::linear(v[0], v[1], v[2]); }},
        OpCase{"concat_rows",
               {{2, 3}, {1, 3}},
               [](Graph&, V& v) { return ops::concat_rows(v[0], v[1]); }},
        OpCase{"concat_cols",
               {{2, 3}, {2, 1}, {2, 2}},
               [](Graph&, V& v) { return ops::concat_cols(v); }},
        OpCase{"gather_rows",
               {{5, 3}},
               [](Graph&, V& v) {
                 const std::size_t rows[] = {4, 0, 2};
                 return ops::gather_rows(v[0], rows);
               }},
        OpCase{"slice_cols", {{3, 6}}, [](Graph&, V& v) { return ops::slice_cols(v[0], 2, 3); }},
        OpCase{"repeat_rows", {{1, 4}}, [](Graph&, V& v) { return ops::repeat_rows(v[0], 3); }},
        OpCase{"gelu", {{3, 4}}, [](Graph&, V& v) { return ops::gelu(v[0]); }},
        OpCase{"sigmoid", {{3, 4}}, [](Graph&, V& v) { return ops::sigmoid(v[0]); }},
        OpCase{"sum", {{3, 4}}, [](Graph&, V& v) { return ops::sum(v[0]); }},
        OpCase{"mean", {{3, 4}}, [](Graph&, V& v) { return ops::mean(v[0]); }},
        OpCase{"cross_entropy",
               {{3, 4}},
               [](Graph&, V& v) {
                 const int labels[] = {0, 3, 1};
                 return ops::cross_entropy(v[0], labels);
               }},
        OpCase{"composite",
               {{4, 3}, {3, 3}},
               [](Graph&, V& v) {
                 // Reuses inputs on several paths so adjoints must accumulate.
                 Var h = ops::gelu(ops::matmul(v[0], v[1]));
                 return ops::add(ops::softmax_lastdim(h), ops::mul(h, ops::matmul(v[0], v[1])));
               }}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return std::string(info.param.name); });

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "tta/autodiff.hpp"
#include "tta/errors.hpp"
#include "tta/gradcheck.hpp"
#include "tta/oracles.hpp"
#include "test_util.hpp"

using namespace tta;
using tta::testing::random_tensor;

namespace {

void expect_values(const Tensor& t, const std::vector<double>& want,
                   double tol = 1e-12) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_NEAR(t.at(i), want[i], tol) << "entry " << i;
  }
}

std::vector<double> grad_of(const Tensor& t) {
  const auto g = t.grad();
  return {g.begin(), g.end()};
}

// Scalarizes an op output with fixed random weights so every output entry
// feeds the gradient.
double fd_error(const std::function<Tensor(const std::vector<Tensor>&)>& op,
                const std::vector<Tensor>& inputs, std::mt19937_64& rng) {
  const Tensor probe = op(inputs);
  const Tensor w = random_tensor(probe.shape(), rng);
  return grad_check(
             [&](const std::vector<Tensor>& xs) { return sum(mul(op(xs), w)); },
             inputs)
      .max_rel_error;
}

}  // namespace

// ---- construction -----------------------------------------------------------

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_EQ(Tensor::zeros({3, 4}).numel(), 12u);
}

TEST(Tensor, DefaultsToNoGradLeaf) {
  Tensor t = Tensor::ones({2});
  EXPECT_FALSE(t.requires_grad());
  EXPECT_TRUE(t.is_leaf());
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.op_id(), 0u);
}

TEST(Tensor, CloneIsIndependent) {
  Tensor a = Tensor::from({2}, {1, 2});
  Tensor b = a.clone();
  b.mutable_data()[0] = 9;
  EXPECT_EQ(a.at(0), 1.0);
  EXPECT_FALSE(a.same_as(b));
}

TEST(Tensor, InPlaceWriteOnNonLeafThrows) {
  Tensor a = Tensor::from({2}, {1, 2}, true);
  Tensor b = scale(a, 2.0);
  EXPECT_THROW(b.mutable_data(), ContractError);
}

// ---- matmul -----------------------------------------------------------------

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  expect_values(matmul(Tensor::eye(2), m), {1, 2, 3, 4});
}

TEST(Matmul, ProjectorSelectsRow) {
  const Tensor p = Tensor::matrix({{1, 0}, {0, 0}});
  const Tensor v = Tensor::matrix({{5}, {7}});
  const Tensor r = matmul(p, v);
  EXPECT_EQ(r.shape(), (Shape{2, 1}));
  expect_values(r, {5, 0});
}

TEST(Matmul, GradientOfSumMatchesFiniteDifference) {
  Tensor a = Tensor::matrix({{1, 2}, {3, 4}}, true);
  const Tensor b = Tensor::matrix({{1}, {1}});
  backward(sum(matmul(a, b)));
  expect_values(Tensor::from({4}, grad_of(a)), {1, 1, 1, 1});

  const auto r = grad_check(
      [&](const std::vector<Tensor>& x) { return sum(matmul(x[0], b)); },
      {Tensor::matrix({{1, 2}, {3, 4}})});
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2"), std::string::npos);
    EXPECT_NE(msg.find("3"), std::string::npos);
  }
}

// ---- elementwise ------------------------------------------------------------

TEST(Elementwise, AddSubMulValues) {
  const Tensor a = Tensor::from({3}, {1, 2, 3});
  const Tensor b = Tensor::from({3}, {4, -5, 0.5});
  expect_values(add(a, b), {5, -3, 3.5});
  expect_values(sub(a, b), {-3, 7, 2.5});
  expect_values(mul(a, b), {4, -10, 1.5});
  expect_values(a + b - b, {1, 2, 3});
}

TEST(Elementwise, AddSubMulGradients) {
  Tensor a = Tensor::from({3}, {1, 2, 3}, true);
  Tensor b = Tensor::from({3}, {4, -5, 0.5}, true);
  backward(sum(add(mul(a, b), sub(a, b))));
  expect_values(Tensor::from({3}, grad_of(a)), {5, -4, 1.5});
  expect_values(Tensor::from({3}, grad_of(b)), {0, 1, 2});
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(mul(Tensor::zeros({2, 2}), Tensor::zeros({4})), DimensionError);
}

TEST(Scale, ValuesAndGradient) {
  Tensor a = Tensor::from({3}, {1, -2, 0}, true);
  expect_values(scale(a, 2.5), {2.5, -5, 0});
  expect_values(scale(a, 0.0), {0, 0, 0});
  backward(sum(scale(a, -3.0)));
  expect_values(Tensor::from({3}, grad_of(a)), {-3, -3, -3});
}

TEST(Log, ValuesClampAndGradient) {
  expect_values(log(Tensor::from({2}, {1.0, std::exp(2.0)})), {0.0, 2.0});
  // log(0) reads log(1e-12).
  expect_values(log(Tensor::from({1}, {0.0})), {std::log(kLogClamp)});
  expect_values(log(Tensor::from({1}, {-3.0})), {std::log(kLogClamp)});
  Tensor a = Tensor::from({2}, {2.0, 0.5}, true);
  backward(sum(log(a)));
  expect_values(Tensor::from({2}, grad_of(a)), {0.5, 2.0});
}

TEST(Exp, ValuesAndGradient) {
  expect_values(exp(Tensor::from({3}, {0, 1, -1})), {1, std::exp(1.0), std::exp(-1.0)});
  Tensor a = Tensor::from({2}, {0.0, 2.0}, true);
  backward(sum(exp(a)));
  expect_values(Tensor::from({2}, grad_of(a)), {1.0, std::exp(2.0)});
}

TEST(Relu, ValuesAndGradient) {
  Tensor a = Tensor::from({4}, {-1, 0.5, 2, -0.1}, true);
  expect_values(relu(a), {0, 0.5, 2, 0});
  backward(sum(relu(a)));
  expect_values(Tensor::from({4}, grad_of(a)), {0, 1, 1, 0});
  expect_values(relu(Tensor::from({1}, {-7})), {0});
}

TEST(Reductions, RowSumSumMean) {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  expect_values(row_sum(m), {6, 15});
  EXPECT_EQ(sum(m).item(), 21.0);
  EXPECT_EQ(mean(m).item(), 3.5);
  EXPECT_EQ(row_sum(Tensor::matrix({{-1, 1}})).at(0), 0.0);
}

TEST(Reductions, Gradients) {
  Tensor m = Tensor::matrix({{1, 2}, {3, 4}}, true);
  backward(mean(m));
  expect_values(Tensor::from({4}, grad_of(m)), {0.25, 0.25, 0.25, 0.25});
  m.zero_grad();
  const Tensor w = Tensor::from({2}, {2, -1});
  backward(sum(mul(row_sum(m), w)));
  expect_values(Tensor::from({4}, grad_of(m)), {2, 2, -1, -1});
}

TEST(L2Norm, ValuesAndGradient) {
  EXPECT_NEAR(l2_norm(Tensor::from({2}, {3, 4})).item(), 5.0, 1e-15);
  EXPECT_EQ(l2_norm(Tensor::zeros({3})).item(), 0.0);
  Tensor a = Tensor::from({2}, {3, 4}, true);
  backward(l2_norm(a));
  expect_values(Tensor::from({2}, grad_of(a)), {0.6, 0.8});
  Tensor z = Tensor::zeros({2}, true);
  backward(l2_norm(z));
  expect_values(Tensor::from({2}, grad_of(z)), {0, 0});
}

TEST(RowBroadcast, AddRowAndMulRow) {
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}});
  expect_values(add_row(x, Tensor::from({2}, {10, 20})), {11, 22, 13, 24});
  expect_values(mul_row(x, Tensor::from({2}, {2, -1})), {2, -2, 6, -4});
  EXPECT_THROW(add_row(x, Tensor::from({3}, {1, 2, 3})), DimensionError);
}

TEST(NormalizeRows, ZeroMeanUnitVariance) {
  const Tensor x = Tensor::matrix({{1, 2, 3, 4}, {10, -10, 5, 0}});
  const Tensor y = normalize_rows(x, 0.0);
  for (std::size_t r = 0; r < 2; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 4; ++c) m += y.at(r, c);
    m /= 4;
    for (std::size_t c = 0; c < 4; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 4, 1.0, 1e-12);
  }
}

// ---- softmax ----------------------------------------------------------------

TEST(Softmax, UniformLogits) {
  expect_values(softmax(Tensor::matrix({{0, 0, 0}})), {1.0 / 3, 1.0 / 3, 1.0 / 3});
}

TEST(Softmax, MatchesScalarOracle) {
  const Tensor p = softmax(Tensor::matrix({{std::log(2.0), 0, 0}}));
  expect_values(p, {0.5, 0.25, 0.25});
  expect_values(p, oracle::softmax({std::log(2.0), 0, 0}));
}

TEST(Softmax, ShiftInvariant) {
  const Tensor a = softmax(Tensor::matrix({{0.3, -1.2, 2.0, 0.0}}));
  const Tensor b = softmax(Tensor::matrix({{0.3 + 17.3, -1.2 + 17.3, 2.0 + 17.3, 17.3}}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-15);
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Tensor p = softmax(Tensor::matrix({{1000, 0}, {-1000, 1000}}));
  EXPECT_NEAR(p.at(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(p.at(1, 1), 1.0, 1e-15);
}

TEST(Softmax, Errors) {
  EXPECT_THROW(softmax(Tensor::matrix({{NAN, 0}})), NumericError);
  EXPECT_THROW(softmax(Tensor::matrix({{INFINITY, 0}})), NumericError);
  EXPECT_THROW(softmax(Tensor::matrix({{1}})), ContractError);
}

// ---- stop_gradient ------------------------------------------------------------

TEST(StopGradient, BlocksGradient) {
  Tensor theta = Tensor::from({2}, {1.5, -2}, true);
  const Tensor x = Tensor::from({2}, {3, 4});
  backward(add(sum(stop_gradient(mul(theta, x))), sum(theta)));
  expect_values(Tensor::from({2}, grad_of(theta)), {1, 1});
}

TEST(StopGradient, OnlyLiveBranchContributes) {
  Tensor a = Tensor::from({2}, {1.5, -2}, true);
  Tensor b = Tensor::from({2}, {1.5, -2}, true);
  const Tensor x = Tensor::from({2}, {3, 4});
  backward(sum(add(mul(a, x), stop_gradient(mul(a, x)))));
  backward(sum(mul(b, x)));
  EXPECT_EQ(grad_of(a), grad_of(b));
}

TEST(StopGradient, PassesValuesAndDropsGraph) {
  Tensor a = Tensor::from({3}, {1, 2, 3}, true);
  const Tensor y = exp(a);
  const Tensor s = stop_gradient(y);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s.at(i), y.at(i));
  EXPECT_FALSE(s.requires_grad());
  EXPECT_TRUE(s.is_leaf());
}

// ---- backward ---------------------------------------------------------------

TEST(Backward, SumGivesOnes) {
  Tensor t = Tensor::from({3}, {4, 5, 6}, true);
  backward(sum(t));
  expect_values(Tensor::from({3}, grad_of(t)), {1, 1, 1});
}

TEST(Backward, SquareGivesTwiceInput) {
  Tensor t = Tensor::from({3}, {1, 2, 3}, true);
  backward(sum(mul(t, t)));
  expect_values(Tensor::from({3}, grad_of(t)), {2, 4, 6});
}

TEST(Backward, AccumulatesUntilZeroed) {
  Tensor t = Tensor::from({2}, {1, 2}, true);
  backward(sum(t));
  backward(sum(t));
  expect_values(Tensor::from({2}, grad_of(t)), {2, 2});
  t.zero_grad();
  expect_values(Tensor::from({2}, grad_of(t)), {0, 0});
}

TEST(Backward, NonScalarLossThrows) {
  Tensor t = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(exp(t)), ContractError);
}

TEST(Backward, VisitsOpsInReverseRecordingOrderOnce) {
  Tensor t = Tensor::from({2}, {1, 2}, true);
  const Tensor a = exp(t);
  const Tensor b = mul(a, a);
  const Tensor loss = sum(b);
  const BackwardTrace trace = backward(loss);
  ASSERT_EQ(trace.visited_ops.size(), 3u);
  EXPECT_EQ(trace.visited_ops[0], loss.op_id());
  EXPECT_EQ(trace.visited_ops[1], b.op_id());
  EXPECT_EQ(trace.visited_ops[2], a.op_id());
}

// ---- finite differences over every op -----------------------------------------

TEST(FiniteDifference, EveryOpAgreesAtRandomPoints) {
  std::mt19937_64 rng(7);
  using Op = std::function<Tensor(const std::vector<Tensor>&)>;
  struct Case {
    const char* name;
    Op op;
    std::vector<Shape> shapes;
    double lo = -1.0;
  };
  const std::vector<Case> cases = {
      {"matmul", [](auto& x) { return matmul(x[0], x[1]); }, {{3, 4}, {4, 2}}},
      {"add", [](auto& x) { return add(x[0], x[1]); }, {{2, 3}, {2, 3}}},
      {"sub", [](auto& x) { return sub(x[0], x[1]); }, {{2, 3}, {2, 3}}},
      {"mul", [](auto& x) { return mul(x[0], x[1]); }, {{2, 3}, {2, 3}}},
      {"scale", [](auto& x) { return scale(x[0], -1.7); }, {{5}}},
      {"add_row", [](auto& x) { return add_row(x[0], x[1]); }, {{3, 4}, {4}}},
      {"mul_row", [](auto& x) { return mul_row(x[0], x[1]); }, {{3, 4}, {4}}},
      {"log", [](auto& x) { return log(x[0]); }, {{6}}, 0.1},
      {"exp", [](auto& x) { return exp(x[0]); }, {{6}}},
      {"row_sum", [](auto& x) { return row_sum(x[0]); }, {{3, 4}}},
      {"sum", [](auto& x) { return sum(x[0]); }, {{3, 4}}},
      {"mean", [](auto& x) { return mean(x[0]); }, {{3, 4}}},
      {"l2_norm", [](auto& x) { return l2_norm(x[0]); }, {{5}}},
      {"softmax", [](auto& x) { return softmax(x[0]); }, {{3, 5}}},
      {"normalize_rows", [](auto& x) { return normalize_rows(x[0], 1e-5); }, {{3, 5}}},
  };
  for (const auto& c : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Tensor> inputs;
      for (const auto& s : c.shapes) inputs.push_back(random_tensor(s, rng, c.lo, 1.0));
      worst = std::max(worst, fd_error(c.op, inputs, rng));
    }
    EXPECT_LT(worst, 1e-5) << c.name;
  }
}

TEST(FiniteDifference, ReluAwayFromKink) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> d(8);
  for (double& v : d) v = sign(rng) ? mag(rng) : -mag(rng);
  const Tensor x = Tensor::from({8}, d);
  EXPECT_LT(fd_error([](auto& v) { return relu(v[0]); }, {x}, rng), 1e-5);
}

TEST(Determinism, SameInputsGiveBitwiseSameGradients) {
  auto run = [] {
    std::mt19937_64 rng(11);
    Tensor w = random_tensor({4, 3}, rng).set_requires_grad(true);
    const Tensor x = random_tensor({5, 4}, rng);
    backward(sum(log(softmax(matmul(x, w)))));
    return grad_of(w);
  };
  EXPECT_EQ(run(), run());
}

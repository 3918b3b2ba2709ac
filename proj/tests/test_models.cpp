#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "tta/errors.hpp"
#include "tta/models.hpp"
#include "tta/streams.hpp"
#include "test_util.hpp"

using namespace tta;

namespace {

std::vector<double> values(const Tensor& t) { return t.to_vector(); }

LabeledSet blobs(std::size_t c, std::size_t d, std::size_t n, double sep,
                 std::uint64_t seed) {
  SourceTask task;
  task.n_classes = c;
  task.input_dim = d;
  task.n_train = n;
  task.separation = sep;
  task.seed = seed;
  return generate_source(task);
}

}  // namespace

TEST(NormLayer, NormalizesBeforeAffine) {
  NormLayer n = NormLayer::init(4);
  const Tensor x = Tensor::matrix({{1, 2, 3, 10}, {-5, 0, 5, 1}});
  const Tensor y = n.forward(x);
  for (std::size_t r = 0; r < 2; ++r) {
    double m = 0;
    for (std::size_t c = 0; c < 4; ++c) m += y.at(r, c);
    EXPECT_NEAR(m / 4, 0.0, 1e-9);
  }
}

TEST(NormLayer, AffineShiftsMean) {
  NormLayer n = NormLayer::init(3);
  n.beta.mutable_data()[0] = 1.0;
  n.beta.mutable_data()[1] = 1.0;
  n.beta.mutable_data()[2] = 1.0;
  const Tensor y = n.forward(Tensor::matrix({{1, 2, 4}}));
  EXPECT_NEAR((y.at(0) + y.at(1) + y.at(2)) / 3, 1.0, 1e-9);
}

TEST(AdaptiveModel, IdentityPredictorGivesEqualBranches) {
  AdaptiveModel m = AdaptiveModel::create({}, 4);
  std::mt19937_64 rng(1);
  const BranchOutputs out = m.forward_branches(tta::testing::random_tensor({5, 8}, rng));
  EXPECT_EQ(values(out.online_logits), values(out.target_logits));
  EXPECT_EQ(predictor_frobenius_drift(m), 0.0);
  for (double b : values(m.predictor().front().bias)) EXPECT_EQ(b, 0.0);
}

TEST(AdaptiveModel, OneEncoderPassPerForward) {
  AdaptiveModel m = AdaptiveModel::create({}, 4);
  std::mt19937_64 rng(1);
  const Tensor x = tta::testing::random_tensor({3, 8}, rng);
  m.forward_branches(x);
  EXPECT_EQ(m.encoder_passes(), 1u);
  m.forward_branches(x);
  EXPECT_EQ(m.encoder_passes(), 2u);
  m.forward_branches(x, false);
  m.predict(x);
  EXPECT_EQ(m.encoder_passes(), 2u);
}

TEST(AdaptiveModel, DoubledPredictorDoublesCenteredLogits) {
  AdaptiveModel m = AdaptiveModel::create({}, 4);
  auto w = m.mutable_predictor().front().weight.mutable_data();
  const std::size_t d = m.feature_dim();
  for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 2.0;
  std::mt19937_64 rng(2);
  const BranchOutputs out = m.forward_branches(tta::testing::random_tensor({4, 8}, rng));
  const auto b = m.classifier().bias.to_vector();
  const std::size_t c = m.n_classes();
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t k = 0; k < c; ++k) {
      EXPECT_NEAR(out.online_logits.at(r, k),
                  2.0 * (out.target_logits.at(r, k) - b[k]) + b[k], 1e-12);
    }
}

TEST(AdaptiveModel, InputDimensionMismatchThrows) {
  AdaptiveModel m = AdaptiveModel::create({}, 4);
  EXPECT_THROW(m.forward_branches(Tensor::zeros({2, 5})), ContractError);
}

TEST(AdaptiveModel, AdaptableSetIsNormAndPredictor) {
  AdaptiveModel m = AdaptiveModel::create({}, 4);
  m.enable_adaptation();
  // 2 blocks × (gamma, beta) + predictor (weight, bias).
  EXPECT_EQ(m.adaptable_params().size(), 6u);
  for (const auto& p : m.adaptable_params()) EXPECT_TRUE(p.requires_grad());
  for (const auto& p : m.frozen_params()) EXPECT_FALSE(p.requires_grad());
  for (const auto& a : m.adaptable_params())
    for (const auto& f : m.frozen_params()) EXPECT_FALSE(a.same_as(f));
}

TEST(AdaptiveModel, CopiesAreDeep) {
  AdaptiveModel a = AdaptiveModel::create({}, 4);
  AdaptiveModel b = a;
  b.mutable_predictor().front().weight.mutable_data()[0] = 5.0;
  EXPECT_EQ(predictor_frobenius_drift(a), 0.0);
  EXPECT_GT(predictor_frobenius_drift(b), 0.0);
}

TEST(Predictor, PerturbedIdentityUsesSeededNormal) {
  AdaptiveModel m = AdaptiveModel::create({}, 4);
  PredictorInit init;
  init.variant = PredictorVariant::RandomPerturbedIdentity;
  init.scale = 0.1;
  init.seed = 9;
  m.init_predictor(init);
  const double drift = predictor_frobenius_drift(m);
  // ‖0.1·W‖_F with 256 standard-normal entries is about 0.1·16.
  EXPECT_GT(drift, 1.0);
  EXPECT_LT(drift, 2.2);
  AdaptiveModel m2 = AdaptiveModel::create({}, 4);
  m2.init_predictor(init);
  EXPECT_EQ(values(m.predictor().front().weight), values(m2.predictor().front().weight));
}

TEST(Predictor, MlpHasNoDrift) {
  AdaptiveModel m = AdaptiveModel::create({}, 4);
  PredictorInit init;
  init.variant = PredictorVariant::TwoLayerMLP;
  m.init_predictor(init);
  EXPECT_FALSE(m.predictor_is_linear());
  EXPECT_THROW(predictor_frobenius_drift(m), UnsupportedMetricError);
}

TEST(Drift, WorkedExample) {
  AdaptiveModel m = AdaptiveModel::create({2, {2}, 2}, 1);
  auto w = m.mutable_predictor().front().weight.mutable_data();
  for (double& v : w) v += 0.1;
  EXPECT_NEAR(predictor_frobenius_drift(m), 0.2, 1e-15);
}

TEST(Drift, IgnoresBias) {
  AdaptiveModel m = AdaptiveModel::create({}, 1);
  for (double& v : m.mutable_predictor().front().bias.mutable_data()) v = 3.0;
  EXPECT_EQ(predictor_frobenius_drift(m), 0.0);
}

TEST(SourceTrain, SeparableBlobsAreFit) {
  AdaptiveModel m = AdaptiveModel::create({2, {32, 16}, 3}, 5);
  TrainOptions opt;
  opt.epochs = 200;
  opt.lr = 0.05;
  opt.seed = 1;
  const TrainReport r = source_train(m, blobs(3, 2, 600, 6.0, 3), opt);
  EXPECT_GE(r.accuracy, 0.99);
}

TEST(SourceTrain, ZeroEpochsLeavesModelUnchanged) {
  AdaptiveModel m = AdaptiveModel::create({}, 5);
  const AdaptiveModel before = m;
  const LabeledSet data = blobs(6, 8, 120, 4.0, 1);
  TrainOptions opt;
  opt.epochs = 0;
  const TrainReport r = source_train(m, data, opt);
  for (std::size_t i = 0; i < m.named_params().size(); ++i) {
    EXPECT_EQ(values(m.named_params()[i].second), values(before.named_params()[i].second));
  }
  AdaptiveModel copy = before;
  EXPECT_EQ(r.accuracy, accuracy(copy, data));
}

TEST(SourceTrain, DeterministicGivenSeed) {
  const LabeledSet data = blobs(6, 8, 240, 4.0, 1);
  TrainOptions opt;
  opt.epochs = 3;
  opt.seed = 4;
  AdaptiveModel a = AdaptiveModel::create({}, 5), b = AdaptiveModel::create({}, 5);
  source_train(a, data, opt);
  source_train(b, data, opt);
  for (std::size_t i = 0; i < a.named_params().size(); ++i) {
    EXPECT_EQ(values(a.named_params()[i].second), values(b.named_params()[i].second));
  }
}

TEST(SourceTrain, EmptyClassIsDataError) {
  LabeledSet data = blobs(6, 8, 120, 4.0, 1);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.labels[i] != 2) keep.push_back(i);
  AdaptiveModel m = AdaptiveModel::create({}, 5);
  EXPECT_THROW(source_train(m, data.subset(keep), {}), DataError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  AdaptiveModel m = tta::testing::trained_model();
  std::stringstream ss;
  save_checkpoint(ss, m);
  const AdaptiveModel back = load_checkpoint(ss);
  ASSERT_EQ(back.named_params().size(), m.named_params().size());
  for (std::size_t i = 0; i < m.named_params().size(); ++i) {
    EXPECT_EQ(back.named_params()[i].first, m.named_params()[i].first);
    EXPECT_EQ(values(back.named_params()[i].second), values(m.named_params()[i].second));
  }
}

TEST(Checkpoint, RejectsUnknownVersion) {
  std::stringstream ss("tta-checkpoint 2\n");
  EXPECT_THROW(load_checkpoint(ss), DataError);
}

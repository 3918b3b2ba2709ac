#include <gtest/gtest.h>

#include <cmath>

#include "tta/adapt.hpp"
#include "tta/errors.hpp"
#include "test_util.hpp"

using namespace tta;

namespace {

SourceTask task() {
  SourceTask t;
  t.n_classes = 4;
  t.input_dim = 6;
  t.seed = 1;
  return t;
}

Stream shifted_stream(std::size_t n = 320, std::size_t batch = 32) {
  StreamSpec spec;
  spec.shift = AdditiveGaussian{1.0};
  spec.batch_size = batch;
  spec.n_samples = n;
  spec.seed = 2;
  return make_stream(spec, generate_pool(task(), 400, 9));
}

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& ps) {
  std::vector<std::vector<double>> out;
  for (const auto& p : ps) out.push_back(p.to_vector());
  return out;
}

std::vector<std::vector<double>> all_params(const AdaptiveModel& m) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : m.named_params()) out.push_back(t.to_vector());
  return out;
}

ZeroSiam zerosiam(double lr_f = 0.01, double lr_h = 0.05) {
  ZeroSiam z;
  z.lr_f = lr_f;
  z.lr_h = lr_h;
  return z;
}

}  // namespace

TEST(AdaptState, MomentumBuffersOnlyForAdaptable) {
  const AdaptiveModel m = tta::testing::trained_model();
  AdaptState tent(m, Tent{0.01}, 0);
  EXPECT_EQ(tent.optimizer().buffer_count(), 4u);  // gamma, beta × 2 blocks
  AdaptState zs(m, zerosiam(), 0);
  EXPECT_EQ(zs.optimizer().buffer_count(), 6u);
  AdaptState none(m, NoAdapt{}, 0);
  EXPECT_EQ(none.optimizer().buffer_count(), 0u);
}

TEST(AdaptState, RejectsBadConfigs) {
  const AdaptiveModel m = tta::testing::trained_model();
  AdaptOptions opt;
  opt.require_predictor_lr_ratio = true;
  EXPECT_THROW(AdaptState(m, zerosiam(0.01, 0.005), 0, opt), ConfigError);
  ZeroSiam neg = zerosiam();
  neg.alpha = -1.0;
  EXPECT_THROW(AdaptState(m, neg, 0), ConfigError);
  opt = {};
  opt.lr_divisor = 0.0;
  EXPECT_THROW(AdaptState(m, Tent{}, 0, opt), ConfigError);
}

TEST(AdaptStep, NoAdaptChangesNothing) {
  AdaptState s(tta::testing::trained_model(), NoAdapt{}, 0);
  const auto before = all_params(s.model());
  const Stream st = shifted_stream();
  for (const auto& b : st.batches) {
    const StepOutput out = adapt_step(s, b);
    EXPECT_FALSE(out.record.updated);
  }
  EXPECT_EQ(all_params(s.model()), before);
  EXPECT_EQ(s.step_count(), st.size());
}

TEST(AdaptStep, TentUpdatesOnlyNormParams) {
  AdaptState s(tta::testing::trained_model(), Tent{0.05}, 0);
  const auto norm_before = snapshot(s.model().norm_params());
  const auto frozen_before = snapshot(s.model().frozen_params());
  const auto pred_before = snapshot(s.model().predictor_params());
  const Stream st = shifted_stream();
  for (const auto& b : st.batches) adapt_step(s, b);
  EXPECT_NE(snapshot(s.model().norm_params()), norm_before);
  EXPECT_EQ(snapshot(s.model().frozen_params()), frozen_before);
  EXPECT_EQ(snapshot(s.model().predictor_params()), pred_before);
}

TEST(AdaptStep, ZeroSiamLeavesEncoderLinearAndClassifierUntouched) {
  AdaptState s(tta::testing::trained_model(), zerosiam(0.05, 0.2), 0);
  const auto frozen_before = snapshot(s.model().frozen_params());
  const Stream st = shifted_stream();
  for (const auto& b : st.batches) adapt_step(s, b);
  EXPECT_EQ(snapshot(s.model().frozen_params()), frozen_before);
  EXPECT_GT(*adapt_step(s, st.batches[0]).record.pred_frob_drift, 0.0);
}

TEST(AdaptStep, TentEquivalenceOnOneBatch) {
  const AdaptiveModel m = tta::testing::trained_model();
  ZeroSiam z = zerosiam(0.03, 0.0);
  z.alpha = 0.0;
  AdaptState a(m, Tent{0.03}, 0), b(m, z, 0);
  const Stream st = shifted_stream();
  for (std::size_t i = 0; i < 5; ++i) {
    adapt_step(a, st.batches[i]);
    adapt_step(b, st.batches[i]);
    EXPECT_EQ(snapshot(a.model().norm_params()), snapshot(b.model().norm_params()));
  }
}

TEST(AdaptStep, WarmStartHasZeroDivergence) {
  AdaptState s(tta::testing::trained_model(), zerosiam(), 0);
  const StepOutput out = adapt_step(s, shifted_stream().batches[0]);
  EXPECT_EQ(out.record.div_loss, 0.0);
  EXPECT_EQ(out.record.entropy_online, out.record.entropy_target);
  EXPECT_EQ(out.record.tv_online_target, 0.0);
}

TEST(AdaptStep, OneEncoderPassPerStep) {
  AdaptState s(tta::testing::trained_model(), zerosiam(), 0);
  s.set_probe(generate_pool(task(), 20, 4));
  const std::size_t before = s.model().encoder_passes();
  const Stream st = shifted_stream();
  for (std::size_t i = 0; i < 4; ++i) adapt_step(s, st.batches[i]);
  EXPECT_EQ(s.model().encoder_passes() - before, 4u);
}

TEST(AdaptStep, TargetBranchIsIsolated) {
  AdaptState s(tta::testing::trained_model(), zerosiam(), 0);
  for (const auto& b : shifted_stream().batches) {
    EXPECT_TRUE(adapt_step(s, b).record.target_branch_isolated);
  }
}

TEST(AdaptStep, PredictionsComeFromTargetBranch) {
  AdaptState s(tta::testing::trained_model(), zerosiam(0.05, 0.5), 0);
  const Stream st = shifted_stream();
  for (std::size_t i = 0; i + 1 < st.size(); ++i) adapt_step(s, st.batches[i]);
  AdaptiveModel copy = s.model();
  const auto expected = copy.predict(st.batches.back().as_tensor());
  EXPECT_EQ(adapt_step(s, st.batches.back()).predictions, expected);
}

TEST(AdaptStep, FilteredTentSkipsUncertainBatch) {
  // Untrained weights give near-uniform predictions: entropy above 0.4·ln C.
  AdaptState s(AdaptiveModel::create({6, {32, 16}, 4}, 3), FilteredTent{0.05, 0.4}, 0);
  const auto before = all_params(s.model());
  const StepOutput out = adapt_step(s, shifted_stream().batches[0]);
  EXPECT_GT(out.record.entropy_target, 0.4 * std::log(4.0));
  EXPECT_EQ(out.record.effective_batch, 0u);
  EXPECT_FALSE(out.record.updated);
  EXPECT_EQ(all_params(s.model()), before);
}

TEST(AdaptStep, FilteredTentWithLooseThresholdMatchesTent) {
  const AdaptiveModel m = tta::testing::trained_model();
  AdaptState a(m, Tent{0.03}, 0), b(m, FilteredTent{0.03, 1.01}, 0);
  const Stream st = shifted_stream();
  for (std::size_t i = 0; i < 3; ++i) {
    adapt_step(a, st.batches[i]);
    EXPECT_EQ(adapt_step(b, st.batches[i]).record.effective_batch, st.batches[i].size());
  }
  const auto na = snapshot(a.model().norm_params()), nb = snapshot(b.model().norm_params());
  for (std::size_t i = 0; i < na.size(); ++i)
    for (std::size_t j = 0; j < na[i].size(); ++j) EXPECT_NEAR(na[i][j], nb[i][j], 1e-12);
}

TEST(AdaptStep, NonFiniteInputPoisonsState) {
  AdaptState s(tta::testing::trained_model(), Tent{0.01}, 0);
  const Stream st = shifted_stream();
  adapt_step(s, st.batches[0]);
  LabeledSet bad = st.batches[1];
  bad.features[0] = NAN;
  try {
    adapt_step(s, bad);
    FAIL() << "expected PoisonedStateError";
  } catch (const PoisonedStateError& e) {
    EXPECT_EQ(e.step(), 1u);
  }
  EXPECT_TRUE(s.poisoned());
  EXPECT_THROW(adapt_step(s, st.batches[2]), PoisonedStateError);
}

TEST(AdaptStep, EmptyBatchThrows) {
  AdaptState s(tta::testing::trained_model(), Tent{0.01}, 0);
  LabeledSet empty;
  empty.dim = 6;
  empty.n_classes = 4;
  EXPECT_THROW(adapt_step(s, empty), ContractError);
}

TEST(AdaptStep, LrDivisorScalesUpdate) {
  const AdaptiveModel m = tta::testing::trained_model();
  AdaptOptions opt;
  opt.lr_divisor = 4.0;
  AdaptState a(m, Tent{0.04}, 0, opt), b(m, Tent{0.01}, 0);
  const Stream st = shifted_stream();
  adapt_step(a, st.batches[0]);
  adapt_step(b, st.batches[0]);
  EXPECT_EQ(snapshot(a.model().norm_params()), snapshot(b.model().norm_params()));
}

TEST(AdaptStep, ProbeEntropyDeltaIsFilled) {
  AdaptOptions opt;
  opt.probe_entropy_delta = true;
  AdaptState s(tta::testing::trained_model(), zerosiam(0.05, 0.5), 0, opt);
  const StepOutput out = adapt_step(s, shifted_stream().batches[0]);
  ASSERT_TRUE(out.record.delta_entropy_online.has_value());
  ASSERT_TRUE(out.record.delta_entropy_target.has_value());
  EXPECT_LT(*out.record.delta_entropy_online, 0.0);
}

TEST(RunStream, NoAdaptAccuracyEqualsSourceAccuracy) {
  AdaptiveModel m = tta::testing::trained_model();
  const Stream st = shifted_stream();
  AdaptState s(m, NoAdapt{}, 0);
  const RunResult r = run_stream(s, st);
  EXPECT_EQ(r.online_accuracy, accuracy(m, st.flatten()));
  EXPECT_EQ(r.records.size(), st.size());
}

TEST(RunStream, NoiseBatchesAreExcludedFromAccuracy) {
  AdaptiveModel m = tta::testing::trained_model();
  const Stream st = shifted_stream();
  const Stream prefixed = pure_noise_prefix(st, 3, 1.0, 5);
  AdaptState s(m, NoAdapt{}, 0);
  const RunResult r = run_stream(s, prefixed);
  EXPECT_EQ(r.counted, st.total_samples());
  EXPECT_EQ(r.online_accuracy, accuracy(m, st.flatten()));
  EXPECT_FALSE(r.records[0].batch_acc.has_value());
}

TEST(RunStream, DeterministicRecords) {
  const AdaptiveModel m = tta::testing::trained_model();
  const Stream st = shifted_stream();
  AdaptState a(m, zerosiam(), 0), b(m, zerosiam(), 0);
  const RunResult ra = run_stream(a, st), rb = run_stream(b, st);
  ASSERT_EQ(ra.records.size(), rb.records.size());
  for (std::size_t i = 0; i < ra.records.size(); ++i) {
    EXPECT_EQ(ra.records[i].loss, rb.records[i].loss);
    EXPECT_EQ(ra.records[i].grad_norm, rb.records[i].grad_norm);
    EXPECT_EQ(ra.records[i].pred_frob_drift, rb.records[i].pred_frob_drift);
  }
}

TEST(RunStream, StopsAtPoisonAndFlagsStep) {
  AdaptiveModel m = tta::testing::trained_model();
  Stream st = shifted_stream();
  st.batches[4].features[0] = INFINITY;
  AdaptState s(m, Tent{0.01}, 0);
  const RunResult r = run_stream(s, st);
  EXPECT_EQ(r.failed_step, 4u);
  EXPECT_EQ(r.records.size(), 4u);
  EXPECT_FALSE(r.failure.empty());
}

TEST(RunStream, EmptyStreamThrows) {
  AdaptState s(tta::testing::trained_model(), NoAdapt{}, 0);
  EXPECT_THROW(run_stream(s, Stream{}), ContractError);
}

TEST(MethodName, Names) {
  EXPECT_EQ(method_name(NoAdapt{}), "noadapt");
  EXPECT_EQ(method_name(Tent{}), "tent");
  EXPECT_EQ(method_name(FilteredTent{}), "filtered_tent");
  EXPECT_EQ(method_name(ZeroSiam{}), "zerosiam");
}

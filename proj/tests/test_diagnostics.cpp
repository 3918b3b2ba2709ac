#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "tta/diagnostics.hpp"
#include "tta/errors.hpp"

using namespace tta;

namespace {

Trajectory constant_trajectory(std::size_t n, double entropy, double dominance,
                               std::size_t classes = 6) {
  Trajectory t;
  t.n_classes = classes;
  t.method = "tent";
  for (std::size_t i = 0; i < n; ++i) {
    StepRecord r;
    r.step = i;
    r.entropy_target = entropy;
    r.dominant_class_frac = dominance;
    t.records.push_back(r);
  }
  return t;
}

}  // namespace

TEST(CenterDominance, IdenticalRowsGiveOne) {
  const std::vector<double> u{1, 2, 3, 1, 2, 3, 1, 2, 3};
  EXPECT_NEAR(center_dominance(u, 3, 3), 1.0, 1e-15);
}

TEST(CenterDominance, OpposedRowsGiveZero) {
  const std::vector<double> u{1, -2, -1, 2};
  EXPECT_EQ(center_dominance(u, 2, 2), 0.0);
}

TEST(CenterDominance, OrthogonalRows) {
  const std::vector<double> u{1, 0, 0, 1};
  EXPECT_NEAR(center_dominance(u, 2, 2), std::sqrt(0.5), 1e-15);
}

TEST(CenterDominance, AllZeroIsZero) {
  const std::vector<double> u(6, 0.0);
  EXPECT_EQ(center_dominance(u, 2, 3), 0.0);
}

TEST(CenterDominance, ScaleInvariant) {
  const std::vector<double> u{0.3, -1.2, 2.0, 0.7, 0.1, -0.4};
  std::vector<double> v = u;
  for (double& x : v) x *= 7.5;
  EXPECT_NEAR(center_dominance(u, 3, 2), center_dominance(v, 3, 2), 1e-12);
}

TEST(MeanRowNorm, Example) {
  const std::vector<double> u{3, 4, 0, 1};
  EXPECT_NEAR(mean_row_norm(u, 2, 2), 3.0, 1e-15);
}

TEST(DominantClass, Fraction) {
  const std::vector<int> p{0, 1, 1, 1, 2};
  EXPECT_NEAR(dominant_class_fraction(p, 3), 0.6, 1e-15);
  const std::vector<int> same(4, 2);
  EXPECT_EQ(dominant_class_fraction(same, 3), 1.0);
}

TEST(Verdict, ConstantOneHotCollapses) {
  EXPECT_EQ(collapse_verdict(constant_trajectory(20, 0.0, 1.0), 10), Verdict::Collapsed);
}

TEST(Verdict, VariedConfidentPredictionsAreStable) {
  const double ln6 = std::log(6.0);
  EXPECT_EQ(collapse_verdict(constant_trajectory(20, 0.5 * ln6, 0.2), 10), Verdict::Stable);
}

TEST(Verdict, BetweenBoundsIsInconclusive) {
  const double ln6 = std::log(6.0);
  // Entropy within 2× of the collapse bound.
  EXPECT_EQ(collapse_verdict(constant_trajectory(20, 0.07 * ln6, 0.2), 10),
            Verdict::Inconclusive);
  // Dominance within 2× of the collapse bound.
  EXPECT_EQ(collapse_verdict(constant_trajectory(20, 0.5 * ln6, 0.85), 10),
            Verdict::Inconclusive);
  // Only one of the two collapse conditions.
  EXPECT_EQ(collapse_verdict(constant_trajectory(20, 0.0, 0.3), 10), Verdict::Inconclusive);
}

TEST(Verdict, UsesTrailingWindowOnly) {
  Trajectory t = constant_trajectory(30, 0.0, 1.0);
  for (std::size_t i = 0; i < 20; ++i) {
    t.records[i].entropy_target = 1.0;
    t.records[i].dominant_class_frac = 0.2;
  }
  EXPECT_EQ(collapse_verdict(t, 10), Verdict::Collapsed);
  EXPECT_NE(collapse_verdict(t, 30), Verdict::Collapsed);
}

TEST(Verdict, WindowLongerThanTrajectoryThrows) {
  EXPECT_THROW(collapse_verdict(constant_trajectory(5, 0.0, 1.0), 6), ContractError);
}

TEST(DriftVsRatio, SingleRatioPassesThrough) {
  Trajectory t = constant_trajectory(3, 1.0, 0.2);
  t.method = "zerosiam";
  t.records.back().pred_frob_drift = 0.4;
  const auto pairs = drift_vs_ratio({{5.0, t}});
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0], std::make_pair(5.0, 0.4));
}

TEST(DriftVsRatio, SortedByRatio) {
  Trajectory a = constant_trajectory(3, 1.0, 0.2), b = a;
  a.method = b.method = "zerosiam";
  a.records.back().pred_frob_drift = 1.0;
  b.records.back().pred_frob_drift = 2.0;
  const auto pairs = drift_vs_ratio({{INFINITY, b}, {1.0, a}});
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].first, 1.0);
  EXPECT_EQ(pairs[1].second, 2.0);
}

TEST(DriftVsRatio, MixedMethodsThrow) {
  Trajectory a = constant_trajectory(3, 1.0, 0.2), b = a;
  a.method = "zerosiam";
  a.records.back().pred_frob_drift = 1.0;
  b.records.back().pred_frob_drift = 1.0;
  EXPECT_THROW(drift_vs_ratio({{1.0, a}, {2.0, b}}), ContractError);
}

TEST(TrailingAverage, Window) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_EQ(trailing_average(v, 2), (std::vector<double>{1, 1.5, 2.5, 3.5}));
  EXPECT_EQ(trailing_average(v, 1), v);
  EXPECT_THROW(trailing_average(v, 0), ContractError);
}

TEST(Csv, HeaderAndRoundTrip) {
  Trajectory t = constant_trajectory(3, 0.25, 0.5);
  t.config_hash = "00ff00ff00ff00ff";
  t.records[1].batch_acc = 0.75;
  t.records[2].pred_frob_drift = 1.0 / 3.0;
  t.records[0].logit_l2 = 1e-300;
  std::stringstream ss;
  write_csv(ss, t);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "# run_id: 00ff00ff00ff00ff");
  std::getline(ss, line);
  EXPECT_EQ(line, kCsvHeader);
  ss.seekg(0);
  std::vector<StepRecord> back;
  EXPECT_EQ(read_csv(ss, back), "00ff00ff00ff00ff");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_FALSE(back[0].batch_acc.has_value());
  EXPECT_EQ(back[1].batch_acc, 0.75);
  EXPECT_EQ(back[2].pred_frob_drift, 1.0 / 3.0);
  EXPECT_EQ(back[0].logit_l2, 1e-300);
}

TEST(Csv, RejectsWrongHeader) {
  std::stringstream ss("step,foo\n");
  std::vector<StepRecord> out;
  EXPECT_THROW(read_csv(ss, out), DataError);
}

#include <gtest/gtest.h>

#include "tta/config.hpp"
#include "tta/errors.hpp"
#include "tta/presets.hpp"
#include "test_util.hpp"

using namespace tta;

namespace {

std::string error_path(const Json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const ExperimentConfig c = config_from_json(Json::object());
  EXPECT_EQ(c.task.n_classes, 6u);
  EXPECT_EQ(c.output_dir, "out");
  EXPECT_TRUE(std::holds_alternative<NoAdapt>(c.method.spec));
}

TEST(Config, RoundTrip) {
  const ExperimentConfig c = tta::testing::tiny_config();
  const Json j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  EXPECT_EQ(run_id(config_from_json(j)), run_id(c));
}

TEST(Config, RoundTripsPresetsAndInfiniteRatio) {
  for (const auto& name : preset_names()) {
    ExperimentConfig c = *preset(name);
    c.stream.spec.ordering = Imbalanced{kInfiniteRatio};
    const Json j = config_to_json(c);
    EXPECT_EQ(j["stream"]["ordering"]["rho"], "inf");
    EXPECT_EQ(config_to_json(config_from_json(j)), j);
  }
}

TEST(Config, UnknownKeysNameTheirPath) {
  EXPECT_EQ(error_path({{"sede", 1}}), "sede");
  EXPECT_EQ(error_path({{"task", {{"classes", 3}}}}), "task.classes");
  EXPECT_EQ(error_path({{"stream", {{"noise_prefix", {{"n", 1}}}}}}),
            "stream.noise_prefix.n");
  EXPECT_EQ(error_path({{"method", {{"name", "tent"}, {"lr_h", 0.1}}}}), "method.lr_h");
}

TEST(Config, TypeMismatches) {
  EXPECT_EQ(error_path({{"seed", "seven"}}), "seed");
  EXPECT_EQ(error_path({{"seed", -1}}), "seed");
  EXPECT_EQ(error_path({{"train", {{"epochs", 1.5}}}}), "train.epochs");
  EXPECT_EQ(error_path({{"emit_plots", 1}}), "emit_plots");
}

TEST(Config, RangeChecks) {
  EXPECT_EQ(error_path({{"task", {{"separation", 2.0}}}}), "task.separation");
  EXPECT_EQ(error_path({{"stream", {{"batch_size", 0}}}}), "stream.batch_size");
  EXPECT_EQ(error_path({{"stream", {{"ordering", {{"kind", "imbalanced"}, {"rho", 0.5}}}}}}),
            "stream.ordering.rho");
  EXPECT_EQ(error_path({{"method", {{"name", "zerosiam"}, {"alpha", -1.0}}}}), "method.alpha");
  EXPECT_EQ(error_path({{"output_dir", ""}}), "output_dir");
  EXPECT_EQ(error_path({{"stream", {{"shift", {{"kind", "mean_shift"}, {"delta", {1, 2}}}}}}}),
            "stream.shift.delta");
}

TEST(Config, UnknownEnumValues) {
  EXPECT_EQ(error_path({{"method", {{"name", "sar"}}}}), "method.name");
  EXPECT_EQ(error_path({{"stream", {{"shift", {{"kind", "blur"}}}}}}), "stream.shift.kind");
  EXPECT_EQ(error_path({{"method", {{"name", "zerosiam"}, {"divergence", "hellinger"}}}}),
            "method.divergence");
}

TEST(Config, MixtureChecks) {
  const Json mix = {{"kind", "mixture"},
                    {"components",
                     {{{"shift", {{"kind", "none"}}}, {"proportion", 0.5}},
                      {{"shift", {{"kind", "feature_scale"}, {"factor", 2.0}}},
                       {"proportion", 0.4}}}}};
  EXPECT_EQ(error_path({{"stream", {{"shift", mix}}}}), "stream.shift.components");
  Json ok = mix;
  ok["components"][1]["proportion"] = 0.5;
  EXPECT_NO_THROW(config_from_json({{"stream", {{"shift", ok}}}}));
}

TEST(Config, PredictorShorthand) {
  const ExperimentConfig c = config_from_json(
      {{"method", {{"name", "zerosiam"}, {"predictor", "perturbed_identity"}}}});
  EXPECT_EQ(std::get<ZeroSiam>(c.method.spec).predictor.variant,
            PredictorVariant::RandomPerturbedIdentity);
}

TEST(RunId, SixteenHexDigits) {
  const std::string id = run_id(tta::testing::tiny_config());
  ASSERT_EQ(id.size(), 16u);
  EXPECT_EQ(id.find_first_not_of("0123456789abcdef"), std::string::npos);
}

TEST(RunId, IgnoresOutputLocationAndPlots) {
  ExperimentConfig a = tta::testing::tiny_config(), b = a;
  b.output_dir = "elsewhere";
  b.emit_plots = true;
  EXPECT_EQ(run_id(a), run_id(b));
}

TEST(RunId, ChangesWithComputation) {
  ExperimentConfig a = tta::testing::tiny_config(), b = a;
  b.seed += 1;
  EXPECT_NE(run_id(a), run_id(b));
  b = a;
  std::get<ZeroSiam>(b.method.spec).lr_h = 0.06;
  EXPECT_NE(run_id(a), run_id(b));
}

TEST(Fnv, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Presets, CollapseAndStableDifferInOrderingAndSource) {
  const ExperimentConfig c = collapse_bench(), s = stable_bench();
  EXPECT_TRUE(std::holds_alternative<ClassOrdered>(c.stream.spec.ordering));
  EXPECT_EQ(std::get<Imbalanced>(s.stream.spec.ordering).rho, 1.0);
  EXPECT_EQ(c.task.n_classes, 6u);
  EXPECT_EQ(c.task.input_dim, 8u);
  EXPECT_EQ(c.stream.spec.n_samples / c.stream.spec.batch_size, 1500u);
  EXPECT_FALSE(preset("nope").has_value());
}

TEST(SaveLoad, FileRoundTrip) {
  const auto dir = tta::testing::scratch_dir("config");
  const std::string path = (dir / "c.json").string();
  const ExperimentConfig c = tta::testing::tiny_config();
  save_config(path, c);
  EXPECT_EQ(config_to_json(load_config(path)), config_to_json(c));
  EXPECT_THROW(load_config((dir / "missing.json").string()), ConfigError);
}

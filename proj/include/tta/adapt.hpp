#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tta/dataset.hpp"
#include "tta/diagnostics.hpp"
#include "tta/models.hpp"
#include "tta/objectives.hpp"
#include "tta/optim.hpp"
#include "tta/rng.hpp"
#include "tta/streams.hpp"

namespace tta {

struct NoAdapt {};

// Entropy minimization on the original branch; norm affine params only.
struct Tent {
  double lr_f = 0.01;
};

// Tent restricted to samples whose entropy is at most e0_fraction · ln C.
struct FilteredTent {
  double lr_f = 0.01;
  double e0_fraction = 0.4;
};

// obj(p^o) + alpha · D(p^o ‖ sg[p^r]); norm params at lr_f, predictor at lr_h.
struct ZeroSiam {
  double lr_f = 0.01;
  double lr_h = 0.05;
  double alpha = 1.0;
  ObjectiveKind objective = ObjectiveKind::Entropy;
  DivergenceKind divergence = DivergenceKind::SymKL;
  PredictorInit predictor{};
};

using MethodSpec = std::variant<NoAdapt, Tent, FilteredTent, ZeroSiam>;

std::string method_name(const MethodSpec& method);

enum class LogitBranch { Target, Online };

struct AdaptOptions {
  // Every learning rate is divided by this (batch-size-1 rescaling).
  double lr_divisor = 1.0;
  // Re-evaluates the batch after each update to fill delta_entropy_*.
  bool probe_entropy_delta = false;
  // Rejects ZeroSiam configs with lr_h < lr_f.
  bool require_predictor_lr_ratio = false;
  // Branch whose logits feed logit_l2 and center_dominance.
  LogitBranch logit_branch = LogitBranch::Target;
};

// Model, optimizer and bookkeeping for one adaptation run.
// Learning rates finite and >= 0, alpha >= 0, e0_fraction > 0, lr_divisor > 0
// and, when requested, lr_h >= lr_f. Throws ConfigError.
void validate_method(const MethodSpec& method, const AdaptOptions& options = {});

class AdaptState {
 public:
  // Applies the method's predictor init (ZeroSiam), freezes everything outside
  // the adaptable set and builds momentum buffers for that set only.
  AdaptState(AdaptiveModel model, MethodSpec method, std::uint64_t seed,
             AdaptOptions options = {});

  AdaptiveModel& model() { return model_; }
  const AdaptiveModel& model() const { return model_; }
  const MethodSpec& method() const { return method_; }
  const AdaptOptions& options() const { return options_; }
  const Sgd& optimizer() const { return optimizer_; }
  Sgd& optimizer() { return optimizer_; }
  std::size_t step_count() const { return step_count_; }
  bool poisoned() const { return failed_step_.has_value(); }
  std::optional<std::size_t> failed_step() const { return failed_step_; }
  Rng& rng() { return rng_; }

  // Balanced held-out inputs whose target-branch predictions define
  // dominant_class_frac. Without a probe the batch predictions are used.
  void set_probe(LabeledSet probe) { probe_ = std::move(probe); }
  const std::optional<LabeledSet>& probe() const { return probe_; }

 private:
  friend struct StepRunner;
  AdaptiveModel model_;
  MethodSpec method_;
  AdaptOptions options_;
  Sgd optimizer_;
  std::size_t step_count_ = 0;
  std::optional<std::size_t> failed_step_;
  Rng rng_;
  std::optional<LabeledSet> probe_;
};

struct StepOutput {
  std::vector<int> predictions;
  StepRecord record;
};

// One online step on a batch. Labels are read only for batch_acc. Throws
// PoisonedStateError on a non-finite loss or gradient; the state is then
// frozen and every later call throws again.
StepOutput adapt_step(AdaptState& state, const LabeledSet& batch);

struct RunResult {
  std::vector<StepRecord> records;
  double online_accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t counted = 0;
  std::optional<std::size_t> failed_step;
  std::string failure;
};

// Runs adapt_step over every batch in order (or the first max_steps).
RunResult run_stream(AdaptState& state, const Stream& stream,
                     std::size_t max_steps = 0);

}  // namespace tta

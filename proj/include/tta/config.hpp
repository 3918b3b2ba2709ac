#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "tta/adapt.hpp"
#include "tta/streams.hpp"

namespace tta {

using Json = nlohmann::json;

struct TrainConfig {
  std::size_t epochs = 60;
  double lr = 0.05;
};

struct NoisePrefix {
  std::size_t n_batches = 0;
  double sigma = 1.0;
};

struct StreamConfig {
  StreamSpec spec;
  std::size_t pool_size = 6000;
  NoisePrefix noise_prefix;
};

struct MethodConfig {
  MethodSpec spec = NoAdapt{};
  double lr_divisor = 1.0;
  bool require_predictor_lr_ratio = false;
};

struct DiagnosticsConfig {
  LogitBranch logit_branch = LogitBranch::Target;
  // Balanced, shifted held-out inputs for dominant_class_frac; 0 uses the batch.
  std::size_t probe_size = 120;
  bool probe_entropy_delta = false;
  // Also report accuracy of the final model on the whole shifted pool.
  bool eval_on_pool = false;
  // Trailing records used for the verdict; 0 means the final quarter.
  std::size_t verdict_window = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  SourceTask task;
  TrainConfig train;
  StreamConfig stream;
  MethodConfig method;
  std::size_t steps_limit = 0;  // 0: the whole stream
  std::string output_dir = "out";
  bool emit_plots = false;
  DiagnosticsConfig diagnostics;
};

// Structured-text (JSON) form. Missing keys take defaults; unknown keys and
// type mismatches throw ConfigError carrying the dotted field path.
ExperimentConfig config_from_json(const Json& j);
Json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);
void save_config(const std::string& path, const ExperimentConfig& config);

// Range and consistency checks beyond parsing; throws ConfigError.
void validate(const ExperimentConfig& config);

// Hash of the canonical serialization with output_dir and emit_plots removed,
// as 16 hex digits. Equal for configs that describe the same computation.
std::string run_id(const ExperimentConfig& config);

// FNV-1a 64 over the bytes of s.
std::uint64_t fnv1a64(std::string_view s);

Json shift_to_json(const ShiftKind& shift);
ShiftKind shift_from_json(const Json& j, const std::string& path);
Json method_to_json(const MethodConfig& method);
MethodConfig method_from_json(const Json& j, const std::string& path);

}  // namespace tta

#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tta/config.hpp"

namespace tta {

// Everything a run needs before the first adaptation step.
struct Prepared {
  AdaptiveModel source;  // trained, frozen, identity predictor
  LabeledSet pool;       // unshifted evaluation pool
  Stream stream;         // includes the noise prefix, if any
  std::size_t prefix_batches = 0;
  std::optional<LabeledSet> probe;
};

struct RunOutcome {
  std::string run_id;
  ExperimentConfig config;
  Trajectory trajectory;
  double online_accuracy = 0.0;
  std::optional<double> pool_accuracy;         // adapted model, shifted pool
  std::optional<double> source_pool_accuracy;  // frozen source, shifted pool
  std::optional<Verdict> verdict;
  double runtime_seconds = 0.0;
  std::optional<std::size_t> failed_step;
  std::string failure;
  std::size_t encoder_passes = 0;

  bool poisoned() const { return failed_step.has_value(); }
};

// Source model for the config's task, training options and seed. Trained
// models are memoized per process; the result does not depend on the cache.
AdaptiveModel source_model(const ExperimentConfig& config);
void clear_source_cache();

Prepared prepare(const ExperimentConfig& config);

// The run itself; touches no files.
RunOutcome execute(const ExperimentConfig& config);

// execute() followed by write_artifacts() into config.output_dir.
RunOutcome run(const ExperimentConfig& config);

// Files written into dir:
//   config.json       {"run_id": ..., "config": {...}}
//   metrics.csv       one row per step, first line "# run_id: <id>"
//   summary.json      accuracy, verdict, runtime, run_id
//   FAILED            only for poisoned runs
//   <panel>.svg       drift, entropy, logit_norm, center_dominance (plots only)
void write_artifacts(const RunOutcome& outcome, const std::string& dir,
                     bool plots);

// Checks that every artifact in dir carries the expected run id. Throws
// DataError naming the first mismatching or unreadable file.
void verify_artifacts(const std::string& dir, const std::string& expected_run_id);

// Writes the source training set and the flattened stream in the columnar
// dataset format: <dir>/source.txt and <dir>/stream.txt.
void export_data(const ExperimentConfig& config, const std::string& dir);

// ---- sweeps -----------------------------------------------------------------

struct SweepAxis {
  std::string name;
  std::vector<Json> values;
};

// Axes are kept sorted by name; the cross product is enumerated with the
// first axis varying slowest.
struct SweepSpec {
  ExperimentConfig base;
  std::vector<SweepAxis> axes;
};

// Accepted axis names.
const std::vector<std::string>& sweep_axis_names();

// Parses {"<axis>": [values...], ...}; throws ConfigError on unknown axes.
SweepSpec sweep_from_json(const ExperimentConfig& base, const Json& axes);
SweepSpec load_sweep(const std::string& config_path, const std::string& axes_path);

// Applies one axis value to a config; throws ConfigError if it does not fit.
ExperimentConfig apply_axis(const ExperimentConfig& config, const std::string& axis,
                            const Json& value);

struct SweepPoint {
  std::vector<Json> values;  // one per axis, in axis order
  std::optional<ExperimentConfig> config;
  std::string error;  // set when the combination is invalid
};

std::vector<SweepPoint> expand(const SweepSpec& spec);

struct SweepRow {
  std::vector<std::string> values;
  std::string run_id;
  std::optional<double> online_accuracy;
  std::optional<double> pool_accuracy;
  std::string verdict;
  std::string error;
};

struct SweepReport {
  std::vector<std::string> axes;
  std::vector<SweepRow> rows;
  std::vector<std::optional<RunOutcome>> outcomes;  // parallel to rows
};

// Runs every point on `jobs` worker threads. Failed runs are recorded and the
// sweep continues. With write_files, each run goes to
// <base.output_dir>/runs/<run_id>/ and the table to <base.output_dir>/sweep.csv.
SweepReport sweep(const SweepSpec& spec, std::size_t jobs, bool write_files = true);

void write_sweep_table(std::ostream& os, const SweepReport& report);

}  // namespace tta

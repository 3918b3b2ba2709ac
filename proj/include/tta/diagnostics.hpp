#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tta {

// One row of per-step adaptation diagnostics. Values describe the batch as
// seen by the model before that step's update, except pred_frob_drift which
// is read after the update.
struct StepRecord {
  std::size_t step = 0;
  std::optional<double> batch_acc;  // absent when the batch has no labels
  double entropy_online = 0.0;
  double entropy_target = 0.0;
  double logit_l2 = 0.0;
  double center_dominance = 0.0;
  std::optional<double> pred_frob_drift;  // absent for non-linear predictors
  double div_loss = 0.0;
  double dominant_class_frac = 0.0;
  double grad_norm = 0.0;

  // Not part of the CSV schema.
  double loss = 0.0;
  double tv_online_target = 0.0;  // batch-mean ½‖p^o − p^r‖₁
  std::optional<double> delta_entropy_online;  // H after − H before, same batch
  std::optional<double> delta_entropy_target;
  bool target_branch_isolated = true;  // backward never visited u^r / p^r
  bool updated = false;
  std::size_t effective_batch = 0;
  double online_acc = 0.0;  // running accuracy after this step
};

struct Trajectory {
  std::vector<StepRecord> records;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string method;
  std::size_t n_classes = 0;

  std::size_t size() const { return records.size(); }
};

enum class Verdict { Collapsed, Stable, Inconclusive };
std::string_view to_string(Verdict v);

// ‖ū‖₂ / mean_i ‖u_i‖₂ over the rows of a [b×C] matrix; 0 if every row is 0.
double center_dominance(std::span<const double> logits, std::size_t rows,
                        std::size_t cols);
// Batch mean of per-row L2 norms.
double mean_row_norm(std::span<const double> logits, std::size_t rows,
                     std::size_t cols);
// Share of predictions equal to the most frequent predicted class.
double dominant_class_fraction(std::span<const int> predictions,
                               std::size_t n_classes);

struct VerdictThresholds {
  double ent_frac = 0.05;
  double dom_frac = 0.9;
};

// Over the trailing `window` records:
//   Collapsed    mean entropy_target < ent_frac·ln C and mean dominance > dom_frac
//   Stable       both metrics stay at least twice as far from their degenerate
//                endpoint (entropy 0, dominance 1) as the collapse thresholds:
//                entropy ≥ 2·ent_frac·ln C and 1 − dominance ≥ 2·(1 − dom_frac)
//   Inconclusive otherwise
Verdict collapse_verdict(const Trajectory& traj, std::size_t window,
                         VerdictThresholds thresholds = {});

// (rho, final pred_frob_drift) sorted by rho. Every trajectory must come from
// the same method; mixing methods is a contract error.
std::vector<std::pair<double, double>> drift_vs_ratio(
    const std::map<double, Trajectory>& results);

// Trailing moving average: out[i] = mean(v[max(0, i−w+1) .. i]).
std::vector<double> trailing_average(std::span<const double> values,
                                     std::size_t window);

// Extracts one metric column from the records.
std::vector<double> column(const std::vector<StepRecord>& records,
                           double StepRecord::*field);

// Fixed CSV schema, one row per record. The optional first line
// "# run_id: <hash>" ties the file to its configuration.
inline constexpr std::string_view kCsvHeader =
    "step,batch_acc,entropy_online,entropy_target,logit_l2,center_dominance,"
    "pred_frob_drift,div_loss,dominant_class_frac,grad_norm";

void write_csv(std::ostream& os, const Trajectory& traj);
// Parses a CSV produced by write_csv; returns the run id (empty if absent).
std::string read_csv(std::istream& is, std::vector<StepRecord>& out);

}  // namespace tta

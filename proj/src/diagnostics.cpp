#include "tta/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "tta/errors.hpp"

namespace tta {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Collapsed: return "collapsed";
    case Verdict::Stable: return "stable";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

double center_dominance(std::span<const double> logits, std::size_t rows,
                        std::size_t cols) {
  if (rows == 0 || logits.size() != rows * cols) {
    throw DimensionError("center_dominance: bad logits block");
  }
  std::vector<double> center(cols, 0.0);
  double norm_sum = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = logits[i * cols + j];
      center[j] += v;
      ss += v * v;
    }
    norm_sum += std::sqrt(ss);
  }
  if (norm_sum == 0.0) return 0.0;
  double css = 0.0;
  for (double& c : center) {
    c /= static_cast<double>(rows);
    css += c * c;
  }
  return std::sqrt(css) / (norm_sum / static_cast<double>(rows));
}

double mean_row_norm(std::span<const double> logits, std::size_t rows,
                     std::size_t cols) {
  if (rows == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      ss += logits[i * cols + j] * logits[i * cols + j];
    }
    total += std::sqrt(ss);
  }
  return total / static_cast<double>(rows);
}

double dominant_class_fraction(std::span<const int> predictions,
                               std::size_t n_classes) {
  if (predictions.empty()) return 0.0;
  std::vector<std::size_t> counts(n_classes, 0);
  for (int p : predictions) {
    if (p >= 0 && static_cast<std::size_t>(p) < n_classes) ++counts[p];
  }
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(predictions.size());
}

Verdict collapse_verdict(const Trajectory& traj, std::size_t window,
                         VerdictThresholds thresholds) {
  if (window == 0 || window > traj.size()) {
    throw ContractError("collapse_verdict: window must be in [1, trajectory "
                        "length]");
  }
  if (traj.n_classes < 2) {
    throw ContractError("collapse_verdict: trajectory lacks n_classes");
  }
  double ent = 0.0, dom = 0.0;
  for (std::size_t i = traj.size() - window; i < traj.size(); ++i) {
    ent += traj.records[i].entropy_target;
    dom += traj.records[i].dominant_class_frac;
  }
  ent /= static_cast<double>(window);
  dom /= static_cast<double>(window);
  const double ln_c = std::log(static_cast<double>(traj.n_classes));
  if (ent < thresholds.ent_frac * ln_c && dom > thresholds.dom_frac) {
    return Verdict::Collapsed;
  }
  if (ent >= 2.0 * thresholds.ent_frac * ln_c &&
      1.0 - dom >= 2.0 * (1.0 - thresholds.dom_frac)) {
    return Verdict::Stable;
  }
  return Verdict::Inconclusive;
}

std::vector<std::pair<double, double>> drift_vs_ratio(
    const std::map<double, Trajectory>& results) {
  std::vector<std::pair<double, double>> out;
  const std::string* method = nullptr;
  for (const auto& [rho, traj] : results) {
    if (method && *method != traj.method) {
      throw ContractError("drift_vs_ratio: trajectories mix methods '" +
                          *method + "' and '" + traj.method + "'");
    }
    method = &traj.method;
    if (traj.records.empty()) {
      throw ContractError("drift_vs_ratio: empty trajectory");
    }
    const auto& drift = traj.records.back().pred_frob_drift;
    if (!drift) {
      throw UnsupportedMetricError("drift_vs_ratio: trajectory has no drift");
    }
    out.emplace_back(rho, *drift);
  }
  return out;  // std::map iterates in key order
}

std::vector<double> trailing_average(std::span<const double> values,
                                     std::size_t window) {
  if (window == 0) throw ContractError("trailing_average: window 0");
  std::vector<double> out(values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= window) acc -= values[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

std::vector<double> column(const std::vector<StepRecord>& records,
                           double StepRecord::*field) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.*field);
  return out;
}

// ---- CSV --------------------------------------------------------------------

namespace {

void put(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

void put(std::ostream& os, const std::optional<double>& v) {
  if (v) put(os, *v);
}

std::optional<double> parse_field(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw DataError("csv: bad numeric field '" + s + "'");
  }
  return v;
}

}  // namespace

void write_csv(std::ostream& os, const Trajectory& traj) {
  if (!traj.config_hash.empty()) os << "# run_id: " << traj.config_hash << '\n';
  os << kCsvHeader << '\n';
  for (const auto& r : traj.records) {
    os << r.step << ',';
    put(os, r.batch_acc);
    os << ',';
    put(os, r.entropy_online);
    os << ',';
    put(os, r.entropy_target);
    os << ',';
    put(os, r.logit_l2);
    os << ',';
    put(os, r.center_dominance);
    os << ',';
    put(os, r.pred_frob_drift);
    os << ',';
    put(os, r.div_loss);
    os << ',';
    put(os, r.dominant_class_frac);
    os << ',';
    put(os, r.grad_norm);
    os << '\n';
  }
}

std::string read_csv(std::istream& is, std::vector<StepRecord>& out) {
  std::string run_id;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("# run_id: ", 0) == 0) {
      run_id = line.substr(10);
      continue;
    }
    if (!header_seen) {
      if (line != kCsvHeader) throw DataError("csv: unexpected header");
      header_seen = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 10) throw DataError("csv: expected 10 fields");
    StepRecord r;
    r.step = static_cast<std::size_t>(std::stoull(f[0]));
    r.batch_acc = parse_field(f[1]);
    r.entropy_online = parse_field(f[2]).value_or(0.0);
    r.entropy_target = parse_field(f[3]).value_or(0.0);
    r.logit_l2 = parse_field(f[4]).value_or(0.0);
    r.center_dominance = parse_field(f[5]).value_or(0.0);
    r.pred_frob_drift = parse_field(f[6]);
    r.div_loss = parse_field(f[7]).value_or(0.0);
    r.dominant_class_frac = parse_field(f[8]).value_or(0.0);
    r.grad_norm = parse_field(f[9]).value_or(0.0);
    out.push_back(r);
  }
  if (!header_seen) throw DataError("csv: missing header");
  return run_id;
}

}  // namespace tta

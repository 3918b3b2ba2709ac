#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tta/config.hpp"

namespace tta {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  AcceptanceOptions();  // the collapse-bench / stable-bench presets

  ExperimentConfig collapse;  // rho = ∞ benchmark, ZeroSiam method
  ExperimentConfig stable;    // rho = 1 benchmark, ZeroSiam method
  std::string work_dir = "acceptance-out";  // artifacts for the determinism checks
  std::size_t jobs = 4;                     // parallel level compared against 1
};

inline constexpr int kCriterionCount = 14;

// Runs one criterion (1..14). Exceptions inside a check count as a failure.
CriterionResult check_criterion(int id, const AcceptanceOptions& options);

// Runs every criterion in order, calling on_result after each.
std::vector<CriterionResult> run_acceptance(
    const AcceptanceOptions& options,
    const std::function<void(const CriterionResult&)>& on_result = {});

// "PASS  6  collapse reproduction: <detail>"
std::string format_result(const CriterionResult& r);

}  // namespace tta

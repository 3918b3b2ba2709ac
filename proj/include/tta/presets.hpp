#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tta/config.hpp"

namespace tta {

// Class-ordered (rho = ∞) mean-shifted stream on which Tent collapses.
ExperimentConfig collapse_bench();
// Same task and shift with i.i.d. (rho = 1) ordering.
ExperimentConfig stable_bench();

std::optional<ExperimentConfig> preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace tta

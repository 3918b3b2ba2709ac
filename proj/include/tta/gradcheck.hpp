#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "tta/autodiff.hpp"

namespace tta {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

// Compares backward() against central differences f(x+h) − f(x−h) / 2h for
// every entry of every input. The error of one entry is
// |analytic − numeric| / max(1, |analytic|, |numeric|).
// `f` must build a scalar from fresh leaves each call.
GradCheckResult grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double step = 1e-6);

}  // namespace tta

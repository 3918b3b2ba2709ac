#include "tta/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tta/errors.hpp"

namespace tta {

GradCheckResult grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double step) {
  std::vector<Tensor> leaves;
  for (const auto& x : inputs) {
    Tensor leaf = x.clone();
    leaf.set_requires_grad(true);
    leaves.push_back(leaf);
  }
  backward(f(leaves));

  GradCheckResult result;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    std::vector<double> analytic(leaves[i].numel(), 0.0);
    if (leaves[i].has_grad()) {
      const auto g = leaves[i].grad();
      analytic.assign(g.begin(), g.end());
    }
    for (std::size_t k = 0; k < leaves[i].numel(); ++k) {
      auto eval = [&](double delta) {
        std::vector<Tensor> probe;
        for (const auto& x : inputs) probe.push_back(x.clone());
        probe[i].mutable_data()[k] += delta;
        return f(probe).item();
      };
      const double numeric = (eval(step) - eval(-step)) / (2.0 * step);
      const double err = std::abs(analytic[k] - numeric) /
                         std::max({1.0, std::abs(analytic[k]), std::abs(numeric)});
      if (!std::isfinite(err)) throw NumericError("grad_check: non-finite value");
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.entries;
    }
  }
  return result;
}

}  // namespace tta

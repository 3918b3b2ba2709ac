#pragma once

#include <vector>

#include "tta/autodiff.hpp"

namespace tta {

// SGD with heavy-ball momentum (no dampening, no Nesterov):
//   buf ← momentum·buf + grad;  param ← param − lr·buf
class Sgd {
 public:
  struct Group {
    std::vector<Tensor> params;
    double lr = 0.0;
  };

  explicit Sgd(double momentum = 0.9) : momentum_(momentum) {}

  void add_group(std::vector<Tensor> params, double lr);
  void step();
  void zero_grad();
  // L2 norm of all current gradients across groups.
  double grad_norm() const;
  bool grads_finite() const;

  const std::vector<Group>& groups() const { return groups_; }
  std::size_t buffer_count() const;

 private:
  double momentum_;
  std::vector<Group> groups_;
  std::vector<std::vector<std::vector<double>>> buffers_;
};

}  // namespace tta

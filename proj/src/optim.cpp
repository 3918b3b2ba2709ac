#include "tta/optim.hpp"

#include <cmath>

namespace tta {

void Sgd::add_group(std::vector<Tensor> params, double lr) {
  std::vector<std::vector<double>> bufs;
  bufs.reserve(params.size());
  for (const auto& p : params) bufs.emplace_back(p.numel(), 0.0);
  groups_.push_back({std::move(params), lr});
  buffers_.push_back(std::move(bufs));
}

void Sgd::step() {
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    auto& group = groups_[g];
    for (std::size_t i = 0; i < group.params.size(); ++i) {
      Tensor& p = group.params[i];
      const auto grad = p.grad();
      if (grad.empty()) continue;
      auto& buf = buffers_[g][i];
      auto data = p.mutable_data();
      for (std::size_t j = 0; j < data.size(); ++j) {
        buf[j] = momentum_ * buf[j] + grad[j];
        data[j] -= group.lr * buf[j];
      }
    }
  }
}

void Sgd::zero_grad() {
  for (auto& group : groups_)
    for (auto& p : group.params) p.zero_grad();
}

double Sgd::grad_norm() const {
  double ss = 0.0;
  for (const auto& group : groups_)
    for (const auto& p : group.params)
      for (double g : p.grad()) ss += g * g;
  return std::sqrt(ss);
}

bool Sgd::grads_finite() const {
  for (const auto& group : groups_)
    for (const auto& p : group.params)
      for (double g : p.grad())
        if (!std::isfinite(g)) return false;
  return true;
}

std::size_t Sgd::buffer_count() const {
  std::size_t n = 0;
  for (const auto& b : buffers_) n += b.size();
  return n;
}

}  // namespace tta

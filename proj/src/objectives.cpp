#include "tta/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "tta/errors.hpp"

namespace tta {

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::Entropy: return "entropy";
    case ObjectiveKind::PseudoLabelCE: return "pseudo_label_ce";
    case ObjectiveKind::NegSquaredProb: return "neg_squared_prob";
  }
  return "?";
}

std::string_view to_string(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::SymKL: return "skl";
    case DivergenceKind::KL: return "kl";
    case DivergenceKind::ReverseKL: return "rkl";
    case DivergenceKind::JS: return "js";
    case DivergenceKind::MSE: return "mse";
  }
  return "?";
}

std::optional<ObjectiveKind> parse_objective(std::string_view name) {
  for (auto k : {ObjectiveKind::Entropy, ObjectiveKind::PseudoLabelCE,
                 ObjectiveKind::NegSquaredProb}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::optional<DivergenceKind> parse_divergence(std::string_view name) {
  for (auto k : {DivergenceKind::SymKL, DivergenceKind::KL,
                 DivergenceKind::ReverseKL, DivergenceKind::JS,
                 DivergenceKind::MSE}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

namespace {

void require_distribution(const char* op, const Tensor& p) {
  if (p.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected [b×C], got " +
                         shape_str(p.shape()));
  }
  const std::size_t c = p.shape()[1];
  const auto d = p.data();
  for (std::size_t i = 0; i < p.shape()[0]; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += d[i * c + j];
    if (!(std::abs(s - 1.0) <= kRowSumTolerance)) {
      throw ContractError(std::string(op) + ": row " + std::to_string(i) +
                          " sums to " + std::to_string(s) + ", not 1");
    }
  }
}

// Σ_c a_c (log a_c − log b_c) per row.
Tensor row_kl(const Tensor& a, const Tensor& b) {
  return row_sum(mul(a, sub(log(a), log(b))));
}

}  // namespace

Tensor per_sample_entropy(const Tensor& p) {
  require_distribution("entropy", p);
  return scale(row_sum(mul(p, log(p))), -1.0);
}

Tensor entropy(const Tensor& p) { return mean(per_sample_entropy(p)); }

Tensor objective(ObjectiveKind kind, const Tensor& p) {
  switch (kind) {
    case ObjectiveKind::Entropy:
      return entropy(p);
    case ObjectiveKind::PseudoLabelCE: {
      require_distribution("pseudo_label_ce", p);
      const std::size_t b = p.shape()[0], c = p.shape()[1];
      const auto d = p.data();
      std::vector<double> mask(b * c, 0.0);
      for (std::size_t i = 0; i < b; ++i) {
        const double* row = d.data() + i * c;
        mask[i * c + static_cast<std::size_t>(std::max_element(row, row + c) -
                                              row)] = 1.0;
      }
      const Tensor label = Tensor::from(p.shape(), std::move(mask));
      return scale(mean(row_sum(mul(label, log(p)))), -1.0);
    }
    case ObjectiveKind::NegSquaredProb:
      require_distribution("neg_squared_prob", p);
      return scale(mean(row_sum(mul(p, p))), -1.0);
  }
  throw ContractError("unknown objective kind");
}

Tensor divergence(DivergenceKind kind, const Tensor& p, const Tensor& q) {
  if (q.requires_grad()) {
    throw ContractError(
        "divergence: target distribution carries a gradient path; wrap it in "
        "stop_gradient");
  }
  require_distribution("divergence", p);
  require_distribution("divergence", q);
  if (p.shape() != q.shape()) {
    throw DimensionError("divergence: shape mismatch " + shape_str(p.shape()) +
                         " vs " + shape_str(q.shape()));
  }
  switch (kind) {
    case DivergenceKind::KL:
      return mean(row_kl(p, q));
    case DivergenceKind::ReverseKL:
      return mean(row_kl(q, p));
    case DivergenceKind::SymKL:
      return mean(add(row_kl(p, q), row_kl(q, p)));
    case DivergenceKind::JS: {
      const Tensor m = scale(add(p, q), 0.5);
      return mean(scale(add(row_kl(p, m), row_kl(q, m)), 0.5));
    }
    case DivergenceKind::MSE: {
      const Tensor d = sub(p, q);
      return mean(row_sum(mul(d, d)));
    }
  }
  throw ContractError("unknown divergence kind");
}

Tensor cross_entropy(const Tensor& p, const Tensor& q) {
  return scale(mean(row_sum(mul(p, log(q)))), -1.0);
}

Tensor zerosiam_loss(const Tensor& p_online, const Tensor& p_target,
                     double alpha, ObjectiveKind obj, DivergenceKind div) {
  if (!(alpha >= 0.0)) {
    throw ContractError("zerosiam_loss: alpha must be >= 0");
  }
  Tensor loss = objective(obj, p_online);
  if (alpha == 0.0) return loss;
  return add(loss, scale(divergence(div, p_online, stop_gradient(p_target)),
                         alpha));
}

}  // namespace tta

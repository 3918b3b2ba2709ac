#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "tta/autodiff.hpp"

namespace tta {

enum class ObjectiveKind { Entropy, PseudoLabelCE, NegSquaredProb };
enum class DivergenceKind { SymKL, KL, ReverseKL, JS, MSE };

std::string_view to_string(ObjectiveKind kind);
std::string_view to_string(DivergenceKind kind);
std::optional<ObjectiveKind> parse_objective(std::string_view name);
std::optional<DivergenceKind> parse_divergence(std::string_view name);

// Rows of p must sum to 1 within this tolerance.
inline constexpr double kRowSumTolerance = 1e-6;

// H(p) = −Σ_c p_c log p_c per row -> [b].
Tensor per_sample_entropy(const Tensor& p);
// Batch-mean entropy -> scalar.
Tensor entropy(const Tensor& p);

// Batch-mean self-training objective on p:
//   Entropy        −Σ p log p
//   PseudoLabelCE  −log p_ŷ, ŷ = argmax p (lowest index on ties, no gradient)
//   NegSquaredProb −Σ p²
Tensor objective(ObjectiveKind kind, const Tensor& p);

// Batch-mean D(p ‖ q). q must not carry a gradient path.
//   KL         Σ p (log p − log q)
//   ReverseKL  Σ q (log q − log p)
//   SymKL      KL + ReverseKL
//   JS         ½ KL(p ‖ m) + ½ KL(q ‖ m), m = ½ (p + q)
//   MSE        Σ (p − q)²
Tensor divergence(DivergenceKind kind, const Tensor& p, const Tensor& q);

// Batch-mean cross-entropy −Σ p log q (q may carry a gradient).
Tensor cross_entropy(const Tensor& p, const Tensor& q);

// obj(p_o) + alpha · D(p_o ‖ sg[p_r]). The stop-gradient on p_r is applied
// here; alpha == 0 skips the divergence term entirely.
Tensor zerosiam_loss(const Tensor& p_online, const Tensor& p_target,
                     double alpha = 1.0,
                     ObjectiveKind obj = ObjectiveKind::Entropy,
                     DivergenceKind div = DivergenceKind::SymKL);

}  // namespace tta

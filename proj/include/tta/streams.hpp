#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <variant>
#include <vector>

#include "tta/dataset.hpp"
#include "tta/models.hpp"

namespace tta {

// Gaussian class blobs around C means placed on a scaled simplex (C ≤ d_in)
// or a circle (C > d_in), then rotated by a seeded orthogonal matrix.
struct SourceTask {
  std::size_t n_classes = 6;
  std::size_t input_dim = 8;
  double separation = 4.0;  // pairwise distance between neighbouring means
  double noise_sigma = 1.0;
  std::size_t n_train = 1200;
  std::uint64_t seed = 0;
};

std::vector<std::vector<double>> class_means(const SourceTask& task);
// n_train samples, balanced per class, deterministic given task.seed.
LabeledSet generate_source(const SourceTask& task);
// Fresh draw of n balanced samples from the same class-conditional law.
LabeledSet generate_pool(const SourceTask& task, std::size_t n,
                         std::uint64_t seed);

// ---- shifts -----------------------------------------------------------------

struct NoShift {};
struct AdditiveGaussian {
  double sigma = 1.0;
};
struct MeanShift {
  std::vector<double> delta;
};
struct FeatureScale {
  double factor = 1.0;
};
struct PureNoise {
  std::size_t n_batches = 0;
  double sigma = 1.0;
};
struct MixtureComponent;
struct Mixture {
  std::vector<MixtureComponent> components;
};

using ShiftKind = std::variant<NoShift, AdditiveGaussian, MeanShift,
                               FeatureScale, Mixture, PureNoise>;

struct MixtureComponent {
  ShiftKind shift;
  double proportion = 0.0;
};

// ---- orderings --------------------------------------------------------------

struct Shuffled {};
struct ClassOrdered {};
// One phase per class. Within phase k, class k is drawn with probability
// rho/(rho+C−1) and each other class with 1/(rho+C−1). rho = ∞ gives
// ClassOrdered, rho = 1 gives i.i.d. uniform labels.
struct Imbalanced {
  double rho = 1.0;
};
using Ordering = std::variant<Shuffled, ClassOrdered, Imbalanced>;

inline constexpr double kInfiniteRatio = std::numeric_limits<double>::infinity();

struct StreamSpec {
  ShiftKind shift = NoShift{};
  Ordering ordering = Shuffled{};
  std::size_t batch_size = 64;
  std::size_t n_samples = 0;  // 0: one pass over the (filtered) pool
  bool blind_spot = false;
  std::uint64_t seed = 0;
};

struct Stream {
  std::size_t dim = 0;
  std::size_t n_classes = 0;
  std::vector<LabeledSet> batches;

  std::size_t size() const { return batches.size(); }
  bool empty() const { return batches.empty(); }
  std::size_t total_samples() const;
  std::size_t labeled_samples() const;
  // All samples concatenated in stream order.
  LabeledSet flatten() const;
};

// Applies a non-mixture shift to every row. Labels are untouched except for
// PureNoise, which replaces features by N(0, σ²) and labels by kNoLabel.
LabeledSet apply_shift(const LabeledSet& pool, const ShiftKind& shift,
                       std::uint64_t seed);

// Shifts the pool, optionally keeps only samples ref_model misclassifies, then
// orders and batches. Throws EmptySubsetError when the blind-spot subset is
// empty and ContractError when blind_spot is set without a reference model.
Stream make_stream(const StreamSpec& spec, const LabeledSet& pool,
                   AdaptiveModel* ref_model = nullptr);

// Prepends n_batches label-free Gaussian batches of the stream's batch size.
Stream pure_noise_prefix(const Stream& stream, std::size_t n_batches,
                         double sigma, std::uint64_t seed,
                         std::size_t batch_size = 0);

// Sample-index sequence for an ordering over `labels`; exposed for tests.
std::vector<std::size_t> order_indices(const Ordering& ordering,
                                       const std::vector<int>& labels,
                                       std::size_t n_classes, std::size_t n,
                                       std::uint64_t seed);

}  // namespace tta

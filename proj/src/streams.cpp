#include "tta/streams.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "tta/errors.hpp"
#include "tta/rng.hpp"

namespace tta {

namespace {

// Seeded random orthogonal matrix (Gram-Schmidt on a Gaussian matrix), rows
// are the basis vectors.
std::vector<std::vector<double>> random_rotation(std::size_t d,
                                                 std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<std::vector<double>> q;
  while (q.size() < d) {
    std::vector<double> v(d);
    for (double& x : v) x = dist(rng);
    for (const auto& u : q) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += v[i] * u[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (double& x : v) x /= norm;
    q.push_back(std::move(v));
  }
  return q;
}

void validate_task(const SourceTask& task) {
  if (task.n_classes < 2) throw ConfigError("task.n_classes", "must be >= 2");
  if (task.input_dim < 2) throw ConfigError("task.input_dim", "must be >= 2");
  if (!(task.noise_sigma >= 0.0)) {
    throw ConfigError("task.noise_sigma", "must be >= 0");
  }
  if (!(task.separation >= 4.0 * task.noise_sigma) || task.separation <= 0.0) {
    throw ConfigError("task.separation",
                      "class means must be at least 4·noise_sigma apart");
  }
}

LabeledSet sample_blobs(const SourceTask& task, std::size_t n,
                        std::uint64_t seed) {
  const auto means = class_means(task);
  LabeledSet set;
  set.dim = task.input_dim;
  set.n_classes = task.n_classes;
  Rng rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> x(task.input_dim);
  const std::size_t per_class = n / task.n_classes;
  const std::size_t extra = n % task.n_classes;
  for (std::size_t c = 0; c < task.n_classes; ++c) {
    const std::size_t count = per_class + (c < extra ? 1 : 0);
    for (std::size_t k = 0; k < count; ++k) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = means[c][i] + task.noise_sigma * dist(rng);
      }
      set.push_back(x, static_cast<int>(c));
    }
  }
  std::vector<std::size_t> perm(set.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return set.subset(perm);
}

}  // namespace

std::vector<std::vector<double>> class_means(const SourceTask& task) {
  validate_task(task);
  const std::size_t c = task.n_classes, d = task.input_dim;
  std::vector<std::vector<double>> raw(c, std::vector<double>(d, 0.0));
  if (c <= d) {
    const double r = task.separation / std::numbers::sqrt2;
    for (std::size_t k = 0; k < c; ++k) raw[k][k] = r;
  } else {
    const double r =
        task.separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(c)));
    for (std::size_t k = 0; k < c; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) /
                       static_cast<double>(c);
      raw[k][0] = r * std::cos(a);
      raw[k][1] = r * std::sin(a);
    }
  }
  const auto q = random_rotation(d, derive_seed(task.seed, "rotation"));
  std::vector<std::vector<double>> out(c, std::vector<double>(d, 0.0));
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) out[k][j] += raw[k][i] * q[i][j];
  return out;
}

LabeledSet generate_source(const SourceTask& task) {
  return sample_blobs(task, task.n_train, derive_seed(task.seed, "train"));
}

LabeledSet generate_pool(const SourceTask& task, std::size_t n,
                         std::uint64_t seed) {
  return sample_blobs(task, n, derive_seed(task.seed ^ mix_seed(seed), "pool"));
}

// ---- Stream -----------------------------------------------------------------

std::size_t Stream::total_samples() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.size();
  return n;
}

std::size_t Stream::labeled_samples() const {
  std::size_t n = 0;
  for (const auto& b : batches)
    n += static_cast<std::size_t>(
        std::count_if(b.labels.begin(), b.labels.end(),
                      [](int y) { return y != kNoLabel; }));
  return n;
}

LabeledSet Stream::flatten() const {
  LabeledSet out;
  out.dim = dim;
  out.n_classes = n_classes;
  for (const auto& b : batches) {
    out.features.insert(out.features.end(), b.features.begin(),
                        b.features.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  }
  return out;
}

// ---- shifts -----------------------------------------------------------------

namespace {

struct ShiftApplier {
  LabeledSet& set;
  std::uint64_t seed;

  void operator()(const NoShift&) const {}

  void operator()(const AdditiveGaussian& s) const {
    Rng rng(derive_seed(seed, "additive_gaussian"));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : set.features) v += s.sigma * dist(rng);
  }

  void operator()(const MeanShift& s) const {
    if (s.delta.size() != set.dim) {
      throw ConfigError("stream.shift.delta",
                        "mean-shift vector has " + std::to_string(s.delta.size()) +
                            " entries, features have " + std::to_string(set.dim));
    }
    for (std::size_t i = 0; i < set.size(); ++i)
      for (std::size_t j = 0; j < set.dim; ++j)
        set.features[i * set.dim + j] += s.delta[j];
  }

  void operator()(const FeatureScale& s) const {
    for (double& v : set.features) v *= s.factor;
  }

  void operator()(const PureNoise& s) const {
    Rng rng(derive_seed(seed, "pure_noise"));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : set.features) v = s.sigma * dist(rng);
    std::fill(set.labels.begin(), set.labels.end(), kNoLabel);
  }

  void operator()(const Mixture&) const {
    throw ContractError("apply_shift: mixtures are resolved by make_stream");
  }
};

std::vector<std::size_t> draw_permutation(std::size_t n, std::size_t count,
                                          Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(count);
  std::vector<std::size_t> perm(n);
  while (out.size() < count) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n && out.size() < count; ++i) {
      out.push_back(perm[i]);
    }
  }
  return out;
}

std::vector<std::size_t> phased_indices(double rho,
                                        const std::vector<int>& labels,
                                        std::size_t n_classes, std::size_t n,
                                        Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  std::vector<std::size_t> present;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (!by_class[c].empty()) present.push_back(c);
  }
  if (present.empty()) throw DataError("stream pool has no labeled samples");

  // Per-class queues refilled with fresh shuffles when exhausted.
  std::vector<std::vector<std::size_t>> queue(n_classes);
  std::vector<std::size_t> head(n_classes, 0);
  auto pop = [&](std::size_t c) {
    if (head[c] == queue[c].size()) {
      queue[c] = by_class[c];
      std::shuffle(queue[c].begin(), queue[c].end(), rng);
      head[c] = 0;
    }
    return queue[c][head[c]++];
  };

  // Phase lengths proportional to class frequency, cumulative rounding.
  std::size_t total_present = 0;
  for (std::size_t c : present) total_present += by_class[c].size();
  std::vector<std::size_t> phase_end;
  std::size_t acc = 0;
  for (std::size_t c : present) {
    acc += by_class[c].size();
    phase_end.push_back(static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * static_cast<double>(acc) /
                     static_cast<double>(total_present))));
  }

  const double k = static_cast<double>(present.size());
  const double p_dominant = std::isinf(rho) ? 1.0 : rho / (rho + k - 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> other(
      0, present.size() > 1 ? present.size() - 2 : 0);

  std::vector<std::size_t> out;
  out.reserve(n);
  std::size_t phase = 0;
  for (std::size_t pos = 0; pos < n; ++pos) {
    while (pos >= phase_end[phase]) ++phase;
    std::size_t cls = present[phase];
    if (present.size() > 1 && p_dominant < 1.0 && unit(rng) >= p_dominant) {
      std::size_t o = other(rng);
      if (o >= phase) ++o;
      cls = present[o];
    }
    out.push_back(pop(cls));
  }
  return out;
}

LabeledSet batchless_sequence(const StreamSpec& spec, const LabeledSet& pool,
                              const ShiftKind& shift, std::size_t n,
                              AdaptiveModel* ref_model, std::uint64_t seed) {
  if (const auto* noise = std::get_if<PureNoise>(&shift)) {
    LabeledSet base;
    base.dim = pool.dim;
    base.n_classes = pool.n_classes;
    const std::size_t count =
        n ? n : noise->n_batches * std::max<std::size_t>(spec.batch_size, 1);
    base.features.assign(count * pool.dim, 0.0);
    base.labels.assign(count, kNoLabel);
    return apply_shift(base, shift, seed);
  }

  LabeledSet shifted = apply_shift(pool, shift, seed);
  if (spec.blind_spot) {
    if (!ref_model) {
      throw ContractError("blind_spot stream requires a reference model");
    }
    const auto pred = ref_model->predict(shifted.as_tensor());
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < shifted.size(); ++i) {
      if (pred[i] != shifted.labels[i]) keep.push_back(i);
    }
    if (keep.empty()) {
      throw EmptySubsetError(
          "blind-spot subset is empty: the reference model classifies every "
          "pool sample correctly");
    }
    shifted = shifted.subset(keep);
  }
  const std::size_t count = n ? n : shifted.size();
  const auto idx = order_indices(spec.ordering, shifted.labels,
                                 shifted.n_classes, count,
                                 derive_seed(seed, "ordering"));
  return shifted.subset(idx);
}

}  // namespace

LabeledSet apply_shift(const LabeledSet& pool, const ShiftKind& shift,
                       std::uint64_t seed) {
  LabeledSet out = pool;
  std::visit(ShiftApplier{out, seed}, shift);
  return out;
}

std::vector<std::size_t> order_indices(const Ordering& ordering,
                                       const std::vector<int>& labels,
                                       std::size_t n_classes, std::size_t n,
                                       std::uint64_t seed) {
  Rng rng(seed);
  if (std::holds_alternative<Shuffled>(ordering)) {
    return draw_permutation(labels.size(), n, rng);
  }
  double rho = kInfiniteRatio;
  if (const auto* imb = std::get_if<Imbalanced>(&ordering)) {
    rho = imb->rho;
    if (!(rho >= 1.0)) {
      throw ConfigError("stream.ordering.rho", "imbalance ratio must be >= 1");
    }
  }
  return phased_indices(rho, labels, n_classes, n, rng);
}

Stream make_stream(const StreamSpec& spec, const LabeledSet& pool,
                   AdaptiveModel* ref_model) {
  if (spec.batch_size == 0) throw ConfigError("stream.batch_size", "must be > 0");
  if (pool.empty() && !std::holds_alternative<PureNoise>(spec.shift)) {
    throw DataError("stream pool is empty");
  }

  LabeledSet sequence;
  sequence.dim = pool.dim;
  sequence.n_classes = pool.n_classes;
  if (const auto* mix = std::get_if<Mixture>(&spec.shift)) {
    if (mix->components.empty()) {
      throw ConfigError("stream.shift.components", "mixture has no components");
    }
    double total = 0.0;
    for (const auto& c : mix->components) {
      if (std::holds_alternative<Mixture>(c.shift)) {
        throw ConfigError("stream.shift.components", "nested mixtures");
      }
      if (!(c.proportion >= 0.0)) {
        throw ConfigError("stream.shift.components", "negative proportion");
      }
      total += c.proportion;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ConfigError("stream.shift.components",
                        "mixture proportions must sum to 1");
    }
    const std::size_t n = spec.n_samples ? spec.n_samples : pool.size();
    double acc = 0.0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < mix->components.size(); ++i) {
      acc += mix->components[i].proportion;
      const std::size_t end =
          i + 1 == mix->components.size()
              ? n
              : static_cast<std::size_t>(std::llround(acc * static_cast<double>(n)));
      if (end <= start) continue;
      const LabeledSet part = batchless_sequence(
          spec, pool, mix->components[i].shift, end - start, ref_model,
          derive_seed(spec.seed, "mixture." + std::to_string(i)));
      sequence.features.insert(sequence.features.end(), part.features.begin(),
                               part.features.end());
      sequence.labels.insert(sequence.labels.end(), part.labels.begin(),
                             part.labels.end());
      start = end;
    }
  } else {
    sequence = batchless_sequence(spec, pool, spec.shift, spec.n_samples,
                                  ref_model, spec.seed);
  }

  Stream stream;
  stream.dim = pool.dim;
  stream.n_classes = pool.n_classes;
  for (std::size_t first = 0; first < sequence.size(); first += spec.batch_size) {
    const std::size_t count = std::min(spec.batch_size, sequence.size() - first);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), first);
    stream.batches.push_back(sequence.subset(idx));
  }
  return stream;
}

Stream pure_noise_prefix(const Stream& stream, std::size_t n_batches,
                         double sigma, std::uint64_t seed,
                         std::size_t batch_size) {
  if (n_batches == 0) return stream;
  if (batch_size == 0) {
    batch_size = stream.empty() ? 1 : stream.batches.front().size();
  }
  Stream out;
  out.dim = stream.dim;
  out.n_classes = stream.n_classes;
  Rng rng(derive_seed(seed, "noise_prefix"));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (std::size_t b = 0; b < n_batches; ++b) {
    LabeledSet batch;
    batch.dim = stream.dim;
    batch.n_classes = stream.n_classes;
    batch.features.resize(batch_size * stream.dim);
    for (double& v : batch.features) v = sigma * dist(rng);
    batch.labels.assign(batch_size, kNoLabel);
    out.batches.push_back(std::move(batch));
  }
  out.batches.insert(out.batches.end(), stream.batches.begin(),
                     stream.batches.end());
  return out;
}

}  // namespace tta

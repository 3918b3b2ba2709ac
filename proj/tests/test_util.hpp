#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tta/autodiff.hpp"
#include "tta/config.hpp"
#include "tta/models.hpp"
#include "tta/streams.hpp"

namespace tta::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> d(shape_numel(shape));
  for (double& v : d) v = u(rng);
  return Tensor::from(std::move(shape), std::move(d));
}

// Random probability rows, every entry bounded away from 0.
inline std::vector<double> random_simplex(std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> p(c);
  double z = 0.0;
  for (double& v : p) z += v = u(rng);
  for (double& v : p) v /= z;
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tta-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Small, fast configuration: 4 classes, short stream.
inline ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.seed = 3;
  c.task.n_classes = 4;
  c.task.input_dim = 6;
  c.task.n_train = 400;
  c.task.seed = 2;
  c.train.epochs = 5;
  c.train.lr = 0.02;
  c.stream.spec.shift = AdditiveGaussian{0.5};
  c.stream.spec.ordering = Imbalanced{1.0};
  c.stream.spec.batch_size = 16;
  c.stream.spec.n_samples = 16 * 40;
  c.stream.spec.seed = 5;
  c.stream.pool_size = 800;
  c.diagnostics.probe_size = 40;
  ZeroSiam z;
  z.lr_f = 0.01;
  z.lr_h = 0.05;
  c.method.spec = z;
  return c;
}

inline AdaptiveModel trained_model(std::uint64_t seed = 1) {
  SourceTask task;
  task.n_classes = 4;
  task.input_dim = 6;
  task.n_train = 400;
  task.seed = seed;
  AdaptiveModel m = AdaptiveModel::create({6, {32, 16}, 4}, seed);
  TrainOptions opt;
  opt.epochs = 5;
  opt.lr = 0.02;
  opt.seed = seed;
  source_train(m, generate_source(task), opt);
  return m;
}

}  // namespace tta::testing

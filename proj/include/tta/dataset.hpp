#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tta/autodiff.hpp"

namespace tta {

// Label carried by samples that have no ground truth (pure-noise batches).
inline constexpr int kNoLabel = -1;

// Row-major feature matrix with one integer label per row.
struct LabeledSet {
  std::size_t dim = 0;
  std::size_t n_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
  void push_back(std::span<const double> x, int label);
  // Rows [first, first + count) as a [count×dim] tensor.
  Tensor rows_tensor(std::size_t first, std::size_t count) const;
  Tensor as_tensor() const { return rows_tensor(0, size()); }
  LabeledSet subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
};

// Columnar text format:
//   optional "# run_id: <hash>" line
//   header:  "<dim> <n_classes>"
//   rows:    "<f_1> ... <f_dim> <label>"  (label -1 marks "no label")
// Features are written with 17 significant digits so a round trip is exact.
void write_dataset(std::ostream& os, const LabeledSet& set,
                   const std::string& run_id = "");
LabeledSet read_dataset(std::istream& is, std::string* run_id = nullptr);

}  // namespace tta

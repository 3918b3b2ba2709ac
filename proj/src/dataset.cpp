#include "tta/dataset.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "tta/errors.hpp"

namespace tta {

void LabeledSet::push_back(std::span<const double> x, int label) {
  if (x.size() != dim) {
    throw DimensionError("sample of width " + std::to_string(x.size()) +
                         " pushed into set of dim " + std::to_string(dim));
  }
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label);
}

Tensor LabeledSet::rows_tensor(std::size_t first, std::size_t count) const {
  if (first + count > size()) {
    throw ContractError("row range past the end of the dataset");
  }
  std::vector<double> d(features.begin() + static_cast<long>(first * dim),
                        features.begin() +
                            static_cast<long>((first + count) * dim));
  return Tensor::from({count, dim}, std::move(d));
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> indices) const {
  LabeledSet out;
  out.dim = dim;
  out.n_classes = n_classes;
  out.features.reserve(indices.size() * dim);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(row(i), labels.at(i));
  return out;
}

std::vector<std::size_t> LabeledSet::class_counts() const {
  std::vector<std::size_t> counts(n_classes, 0);
  for (int y : labels) {
    if (y >= 0 && static_cast<std::size_t>(y) < n_classes) ++counts[y];
  }
  return counts;
}

void write_dataset(std::ostream& os, const LabeledSet& set,
                   const std::string& run_id) {
  if (!run_id.empty()) os << "# run_id: " << run_id << '\n';
  os << set.dim << ' ' << set.n_classes << '\n';
  char buf[32];
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (double v : set.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << buf << ' ';
    }
    os << set.labels[i] << '\n';
  }
}

LabeledSet read_dataset(std::istream& is, std::string* run_id) {
  LabeledSet set;
  std::string line;
  if (!std::getline(is, line)) throw DataError("dataset: missing header line");
  if (line.rfind("# run_id: ", 0) == 0) {
    if (run_id) *run_id = line.substr(10);
    if (!std::getline(is, line)) throw DataError("dataset: missing header line");
  }
  {
    std::istringstream hs(line);
    if (!(hs >> set.dim >> set.n_classes) || set.dim == 0) {
      throw DataError("dataset: malformed header '" + line + "'");
    }
  }
  std::vector<double> row(set.dim);
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream rs(line);
    for (double& v : row) {
      if (!(rs >> v)) {
        throw DataError("dataset: short row at line " +
                        std::to_string(line_no));
      }
    }
    int label = 0;
    if (!(rs >> label)) {
      throw DataError("dataset: missing label at line " +
                      std::to_string(line_no));
    }
    if (label < kNoLabel || (label >= 0 && static_cast<std::size_t>(label) >=
                                               set.n_classes)) {
      throw DataError("dataset: label out of range at line " +
                      std::to_string(line_no));
    }
    set.push_back(row, label);
  }
  return set;
}

}  // namespace tta

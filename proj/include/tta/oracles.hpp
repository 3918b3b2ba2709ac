#pragma once

// Scalar reference formulas on plain vectors, written without the tensor
// library so they can check it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace tta::oracle {

inline std::vector<double> softmax(const std::vector<double>& u) {
  const double m = *std::max_element(u.begin(), u.end());
  std::vector<double> p(u.size());
  double z = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) z += p[i] = std::exp(u[i] - m);
  for (double& v : p) v /= z;
  return p;
}

inline double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) h -= v * std::log(v);
  return h;
}

inline double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += p[i] * std::log(p[i] / q[i]);
  return d;
}

inline double reverse_kl(const std::vector<double>& p, const std::vector<double>& q) {
  return kl(q, p);
}

inline double sym_kl(const std::vector<double>& p, const std::vector<double>& q) {
  return kl(p, q) + kl(q, p);
}

inline double js(const std::vector<double>& p, const std::vector<double>& q) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl(p, m) + 0.5 * kl(q, m);
}

inline double mse(const std::vector<double>& p, const std::vector<double>& q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += (p[i] - q[i]) * (p[i] - q[i]);
  return d;
}

inline double cross_entropy(const std::vector<double>& p, const std::vector<double>& q) {
  double c = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) c -= p[i] * std::log(q[i]);
  return c;
}

}  // namespace tta::oracle

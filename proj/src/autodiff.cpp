#include "tta/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "tta/errors.hpp"

namespace tta {

namespace detail {

// Accumulators for each input of a node; nullptr where the input needs no grad.
using GradSinks = std::vector<std::vector<double>*>;
using BackwardFn =
    std::function<void(std::span<const double> grad_out, GradSinks& sinks)>;

struct Node {
  std::uint64_t id = 0;
  std::string name;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  bool grad_present = false;
  std::vector<double> grad;
  std::shared_ptr<Node> node;
};

namespace {
thread_local std::uint64_t next_op_id = 1;
}  // namespace

}  // namespace detail

using detail::GradSinks;
using detail::Node;
using detail::TensorImpl;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
  return full(std::move(shape), 1.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

Tensor Tensor::eye(std::size_t n, bool requires_grad) {
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
  return from({n, n}, std::move(d), requires_grad);
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows,
                      bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.front().size() : 0;
  std::vector<double> d;
  d.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::matrix");
    d.insert(d.end(), row.begin(), row.end());
  }
  return from({r, c}, std::move(d), requires_grad);
}

TensorImpl& Tensor::impl() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }
std::size_t Tensor::numel() const { return impl().data.size(); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  return 1;
}

std::span<const double> Tensor::data() const { return impl().data; }

std::span<double> Tensor::mutable_data() {
  if (impl().node) throw ContractError("in-place write to a non-leaf tensor");
  return impl().data;
}

std::vector<double> Tensor::to_vector() const { return impl().data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl().data[0];
}

double Tensor::at(std::size_t i) const { return impl().data.at(i); }

double Tensor::at(std::size_t r, std::size_t c) const {
  return impl().data.at(r * cols() + c);
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  if (impl().node && !value) {
    throw ContractError("cannot clear requires_grad on a non-leaf tensor");
  }
  impl().requires_grad = value;
  return *this;
}

bool Tensor::is_leaf() const { return impl().node == nullptr; }
bool Tensor::has_grad() const { return impl().grad_present; }

std::span<const double> Tensor::grad() const {
  if (!impl().grad_present) return {};
  return impl().grad;
}

void Tensor::zero_grad() {
  auto& t = impl();
  if (t.grad_present) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

void Tensor::clear_grad() {
  auto& t = impl();
  t.grad.clear();
  t.grad_present = false;
}

std::uint64_t Tensor::op_id() const {
  return impl().node ? impl().node->id : 0;
}

std::string Tensor::op_name() const {
  return impl().node ? impl().node->name : std::string("leaf");
}

Tensor Tensor::clone() const {
  return from(impl().shape, impl().data, impl().requires_grad);
}

bool BackwardTrace::visited(std::uint64_t id) const {
  return std::find(visited_ops.begin(), visited_ops.end(), id) !=
         visited_ops.end();
}

// ---- op recording -----------------------------------------------------------

class OpBuilder {
 public:
  static std::shared_ptr<TensorImpl> impl_of(const Tensor& t) {
    t.impl();
    return t.impl_;
  }

  static Tensor make(std::string name, Shape shape, std::vector<double> data,
                     std::vector<Tensor> inputs, detail::BackwardFn backward) {
    auto out = std::make_shared<TensorImpl>();
    out->shape = std::move(shape);
    out->data = std::move(data);
    const bool needs_grad = std::any_of(
        inputs.begin(), inputs.end(),
        [](const Tensor& t) { return t.requires_grad(); });
    if (needs_grad) {
      auto node = std::make_shared<Node>();
      node->id = detail::next_op_id++;
      node->name = std::move(name);
      for (const auto& in : inputs) node->inputs.push_back(in.impl_);
      node->backward = std::move(backward);
      out->node = std::move(node);
      out->requires_grad = true;
    }
    return Tensor(std::move(out));
  }
};

struct BackwardAccess {
  static std::shared_ptr<TensorImpl> impl_of(const Tensor& t) {
    return OpBuilder::impl_of(t);
  }
};

BackwardTrace backward(const Tensor& loss) {
  auto root = BackwardAccess::impl_of(loss);
  if (root->data.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_str(root->shape));
  }
  if (!root->requires_grad) {
    throw ContractError("backward() on a loss that is not connected to any "
                        "tensor requiring grad");
  }

  // Collect every op reachable through inputs that require grad.
  std::vector<TensorImpl*> ops;
  std::unordered_set<TensorImpl*> seen;
  std::vector<TensorImpl*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    TensorImpl* t = stack.back();
    stack.pop_back();
    if (!t->node) continue;
    ops.push_back(t);
    for (const auto& in : t->node->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) {
        stack.push_back(in.get());
      }
    }
  }
  // Reverse recording order is a valid topological order.
  std::sort(ops.begin(), ops.end(), [](const TensorImpl* a, const TensorImpl* b) {
    return a->node->id > b->node->id;
  });

  std::unordered_map<TensorImpl*, std::vector<double>> pass;
  pass[root.get()] = {1.0};

  BackwardTrace trace;
  trace.visited_ops.reserve(ops.size());
  for (TensorImpl* t : ops) {
    auto it = pass.find(t);
    if (it == pass.end()) continue;
    const std::vector<double> grad_out = it->second;
    GradSinks sinks;
    sinks.reserve(t->node->inputs.size());
    for (const auto& in : t->node->inputs) {
      if (!in->requires_grad) {
        sinks.push_back(nullptr);
        continue;
      }
      auto& buf = pass[in.get()];
      if (buf.empty()) buf.assign(in->data.size(), 0.0);
      sinks.push_back(&buf);
    }
    t->node->backward(grad_out, sinks);
    trace.visited_ops.push_back(t->node->id);
  }

  for (auto& [t, g] : pass) {
    if (!t->requires_grad) continue;
    if (!t->grad_present) {
      t->grad.assign(t->data.size(), 0.0);
      t->grad_present = true;
    }
    for (std::size_t i = 0; i < g.size(); ++i) t->grad[i] += g[i];
  }
  return trace;
}

// ---- operators --------------------------------------------------------------

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_str(a.shape()));
  }
}

void require_finite(const char* op, std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": non-finite input entry");
    }
  }
}

// Applies f elementwise; df(x, y) is the local derivative.
template <typename F, typename DF>
Tensor unary(const char* name, const Tensor& a, F f, DF df) {
  const auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  auto a_impl = OpBuilder::impl_of(a);
  std::vector<double> out_copy = out;
  return OpBuilder::make(
      name, a.shape(), std::move(out), {a},
      [a_impl, out_copy = std::move(out_copy), df](std::span<const double> g,
                                                   GradSinks& sinks) {
        if (!sinks[0]) return;
        auto& ga = *sinks[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * df(a_impl->data[i], out_copy[i]);
        }
      });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * B[p * n + j];
    }
  }
  auto ai = OpBuilder::impl_of(a);
  auto bi = OpBuilder::impl_of(b);
  return OpBuilder::make(
      "matmul", {m, n}, std::move(out), {a, b},
      [ai, bi, m, k, n](std::span<const double> g, GradSinks& sinks) {
        if (sinks[0]) {
          // dA = G · Bᵀ
          auto& ga = *sinks[0];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j)
                acc += g[i * n + j] * bi->data[p * n + j];
              ga[i * k + p] += acc;
            }
        }
        if (sinks[1]) {
          // dB = Aᵀ · G
          auto& gb = *sinks[1];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = ai->data[i * k + p];
              for (std::size_t j = 0; j < n; ++j)
                gb[p * n + j] += aip * g[i * n + j];
            }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto A = a.data(), B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
  return OpBuilder::make("add", a.shape(), std::move(out), {a, b},
                         [](std::span<const double> g, GradSinks& sinks) {
                           for (auto* s : sinks) {
                             if (!s) continue;
                             for (std::size_t i = 0; i < g.size(); ++i)
                               (*s)[i] += g[i];
                           }
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto A = a.data(), B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] - B[i];
  return OpBuilder::make("sub", a.shape(), std::move(out), {a, b},
                         [](std::span<const double> g, GradSinks& sinks) {
                           if (sinks[0])
                             for (std::size_t i = 0; i < g.size(); ++i)
                               (*sinks[0])[i] += g[i];
                           if (sinks[1])
                             for (std::size_t i = 0; i < g.size(); ++i)
                               (*sinks[1])[i] -= g[i];
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto A = a.data(), B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
  auto ai = OpBuilder::impl_of(a);
  auto bi = OpBuilder::impl_of(b);
  return OpBuilder::make(
      "mul", a.shape(), std::move(out), {a, b},
      [ai, bi](std::span<const double> g, GradSinks& sinks) {
        if (sinks[0])
          for (std::size_t i = 0; i < g.size(); ++i)
            (*sinks[0])[i] += g[i] * bi->data[i];
        if (sinks[1])
          for (std::size_t i = 0; i < g.size(); ++i)
            (*sinks[1])[i] += g[i] * ai->data[i];
      });
}

Tensor scale(const Tensor& a, double s) {
  const auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * s;
  return OpBuilder::make("scale", a.shape(), std::move(out), {a},
                         [s](std::span<const double> g, GradSinks& sinks) {
                           if (!sinks[0]) return;
                           for (std::size_t i = 0; i < g.size(); ++i)
                             (*sinks[0])[i] += g[i] * s;
                         });
}

namespace {

void require_row_vector(const char* op, const Tensor& x, const Tensor& v) {
  require_rank2(op, x);
  if (v.numel() != x.shape()[1] || v.dim() > 2 ||
      (v.dim() == 2 && v.shape()[0] != 1)) {
    throw DimensionError(std::string(op) + ": row vector " +
                         shape_str(v.shape()) + " does not fit " +
                         shape_str(x.shape()));
  }
}

}  // namespace

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_row_vector("add_row", x, bias);
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  const auto X = x.data(), B = bias.data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = X[i * c + j] + B[j];
  return OpBuilder::make("add_row", x.shape(), std::move(out), {x, bias},
                         [r, c](std::span<const double> g, GradSinks& sinks) {
                           if (sinks[0])
                             for (std::size_t i = 0; i < g.size(); ++i)
                               (*sinks[0])[i] += g[i];
                           if (sinks[1])
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j)
                                 (*sinks[1])[j] += g[i * c + j];
                         });
}

Tensor mul_row(const Tensor& x, const Tensor& gain) {
  require_row_vector("mul_row", x, gain);
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  const auto X = x.data(), G = gain.data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = X[i * c + j] * G[j];
  auto xi = OpBuilder::impl_of(x);
  auto gi = OpBuilder::impl_of(gain);
  return OpBuilder::make(
      "mul_row", x.shape(), std::move(out), {x, gain},
      [xi, gi, r, c](std::span<const double> g, GradSinks& sinks) {
        if (sinks[0])
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              (*sinks[0])[i * c + j] += g[i * c + j] * gi->data[j];
        if (sinks[1])
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              (*sinks[1])[j] += g[i * c + j] * xi->data[i * c + j];
      });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(std::max(x, kLogClamp)); },
      [](double x, double) { return x > kLogClamp ? 1.0 / x : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor row_sum(const Tensor& a) {
  require_rank2("row_sum", a);
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  const auto A = a.data();
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += A[i * c + j];
  return OpBuilder::make("row_sum", {r}, std::move(out), {a},
                         [r, c](std::span<const double> g, GradSinks& sinks) {
                           if (!sinks[0]) return;
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               (*sinks[0])[i * c + j] += g[i];
                         });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return OpBuilder::make("sum", {}, {s}, {a},
                         [](std::span<const double> g, GradSinks& sinks) {
                           if (!sinks[0]) return;
                           for (double& v : *sinks[0]) v += g[0];
                         });
}

Tensor mean(const Tensor& a) {
  const auto A = a.data();
  if (A.empty()) throw ContractError("mean of an empty tensor");
  double s = 0.0;
  for (double x : A) s += x;
  const double inv = 1.0 / static_cast<double>(A.size());
  return OpBuilder::make("mean", {}, {s * inv}, {a},
                         [inv](std::span<const double> g, GradSinks& sinks) {
                           if (!sinks[0]) return;
                           for (double& v : *sinks[0]) v += g[0] * inv;
                         });
}

Tensor l2_norm(const Tensor& a) {
  double ss = 0.0;
  for (double x : a.data()) ss += x * x;
  const double norm = std::sqrt(ss);
  auto ai = OpBuilder::impl_of(a);
  return OpBuilder::make(
      "l2_norm", {}, {norm}, {a},
      [ai, norm](std::span<const double> g, GradSinks& sinks) {
        if (!sinks[0] || norm == 0.0) return;
        auto& ga = *sinks[0];
        for (std::size_t i = 0; i < ga.size(); ++i)
          ga[i] += g[0] * ai->data[i] / norm;
      });
}

Tensor softmax(const Tensor& u) {
  require_rank2("softmax", u);
  const std::size_t r = u.shape()[0], c = u.shape()[1];
  if (c < 2) throw ContractError("softmax: needs at least 2 classes");
  const auto U = u.data();
  require_finite("softmax", U);
  std::vector<double> out(U.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = U.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(row[j] - mx);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  std::vector<double> y = out;
  return OpBuilder::make(
      "softmax", u.shape(), std::move(out), {u},
      [y = std::move(y), r, c](std::span<const double> g, GradSinks& sinks) {
        if (!sinks[0]) return;
        auto& gu = *sinks[0];
        for (std::size_t i = 0; i < r; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
          for (std::size_t j = 0; j < c; ++j)
            gu[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
        }
      });
}

Tensor normalize_rows(const Tensor& x, double eps) {
  require_rank2("normalize_rows", x);
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  const auto X = x.data();
  std::vector<double> out(X.size());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += X[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = X[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = (X[i * c + j] - mu) * inv_std[i];
  }
  std::vector<double> y = out;
  return OpBuilder::make(
      "normalize_rows", x.shape(), std::move(out), {x},
      [y = std::move(y), inv_std = std::move(inv_std), r, c](
          std::span<const double> g, GradSinks& sinks) {
        if (!sinks[0]) return;
        auto& gx = *sinks[0];
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t i = 0; i < r; ++i) {
          double g_mean = 0.0, gy_mean = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            g_mean += g[i * c + j];
            gy_mean += g[i * c + j] * y[i * c + j];
          }
          g_mean *= inv_c;
          gy_mean *= inv_c;
          for (std::size_t j = 0; j < c; ++j)
            gx[i * c + j] += inv_std[i] *
                             (g[i * c + j] - g_mean - y[i * c + j] * gy_mean);
        }
      });
}

Tensor stop_gradient(const Tensor& t) {
  return Tensor::from(t.shape(), t.to_vector(), false);
}

}  // namespace tta

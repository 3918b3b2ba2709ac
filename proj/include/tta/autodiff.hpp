#pragma once

// Minimal define-by-run reverse-mode autodiff over dense row-major f64
// tensors. A Tensor is a cheap shared handle: copying it aliases the same
// buffer and graph node. Use clone() for an independent copy.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tta {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Clamp applied inside log(); log(x) == log(max(x, kLogClamp)).
inline constexpr double kLogClamp = 1e-12;

namespace detail {
struct TensorImpl;
struct Node;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor eye(std::size_t n, bool requires_grad = false);
  // Row-major matrix from nested rows.
  static Tensor matrix(const std::vector<std::vector<double>>& rows,
                       bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t dim() const { return shape().size(); }
  // Matrix helpers; a rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Mutable view for in-place parameter updates. Must only be used on leaves.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  // Drops the grad buffer entirely (grad absent afterwards).
  void clear_grad();

  // Identifier of the producing op, 0 for leaves. Ids grow in recording order.
  std::uint64_t op_id() const;
  std::string op_name() const;

  // Deep copy of data (and requires_grad flag); no graph, no grad.
  Tensor clone() const;

  bool same_as(const Tensor& other) const noexcept {
    return impl_ == other.impl_;
  }

 private:
  friend struct detail::TensorImpl;
  friend class OpBuilder;
  friend struct BackwardAccess;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  detail::TensorImpl& impl() const;

  std::shared_ptr<detail::TensorImpl> impl_;
};

// Record of one backward sweep: the op ids visited, in visit order.
struct BackwardTrace {
  std::vector<std::uint64_t> visited_ops;
  bool visited(std::uint64_t id) const;
};

// Populates grad on every reachable tensor with requires_grad = true.
// Grads accumulate across calls until zero_grad()/clear_grad().
BackwardTrace backward(const Tensor& loss);

// ---- operators --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// x[b×n] + bias[n], bias broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
// x[b×n] ⊙ gain[n], gain broadcast over rows.
Tensor mul_row(const Tensor& x, const Tensor& gain);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
// [b×n] -> [b]
Tensor row_sum(const Tensor& a);
// Sum / mean over every entry -> scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Euclidean norm over every entry -> scalar. Gradient at 0 is taken as 0.
Tensor l2_norm(const Tensor& a);
// Row-wise softmax of [b×C] logits.
Tensor softmax(const Tensor& u);
// Per-row standardization (x - mean) / sqrt(var + eps), no affine.
Tensor normalize_rows(const Tensor& x, double eps);
// Same data, no graph, requires_grad = false.
Tensor stop_gradient(const Tensor& t);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace tta

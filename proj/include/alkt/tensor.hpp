// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a graph node. Every op returns a fresh node
// whose parents are its inputs; calling backward() on a scalar walks the graph
// in reverse topological order and accumulates gradients into every node that
// requires them. Leaf parameters keep their gradients until zero_grad().

#ifndef ALKT_TENSOR_HPP
#define ALKT_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace alkt {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  std::uint64_t id = 0;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  /// Leaf tensor that participates in differentiation.
  static Tensor parameter(Shape shape, std::vector<double> values);

  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Writable storage. Only meaningful on leaves; writing into an interior
  /// node after its graph was built corrupts later backward passes.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  bool is_leaf() const;
  std::uint64_t node_id() const;

  /// Same values, no graph history, no gradient.
  Tensor detach() const;
  /// Deep copy of the values into a new independent leaf.
  Tensor clone() const;

  void backward() const;

  /// Throws std::domain_error naming `what` if any value is NaN or Inf.
  void check_finite(const std::string& what) const;
  bool all_finite() const;

  explicit Tensor(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {
/// Build an op result. Attaches parents and the backward closure only when
/// gradient recording is on and some parent requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(Node&)> backward_fn);
}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- forward ops -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// x is (N, F) with b (F), or (N, C, ...) with b (C).
Tensor add_bias(const Tensor& x, const Tensor& b);
Tensor relu(const Tensor& x);
/// x (N, C, H, W), kernel (O, C, K, K); stride 1 or 2; symmetric zero padding.
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride,
              std::size_t padding);
/// (N, C, H, W) -> (N, C)
Tensor global_avg_pool(const Tensor& x);
/// (N, ...) -> (N, prod(...))
Tensor flatten(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor square(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Euclidean norm of all entries.
Tensor l2_norm(const Tensor& x);
/// Euclidean norm of each row of a (N, F) tensor -> (N).
Tensor row_l2_norm(const Tensor& x);
/// Row-wise softmax over the last axis of a (N, K) tensor.
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);
/// Mean negative log-likelihood of integer labels under (N, K) log-probs.
Tensor cross_entropy(const Tensor& log_probs, std::span<const int> labels);
Tensor mse(const Tensor& a, const Tensor& b);
Tensor l1(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double s);
Tensor scale(const Tensor& x, double s);

/// Sum over the channel axis of squared activations: (N, C, ...) -> (N,
/// prod(...)). A rank-2 (N, F) input is read as F locations with one channel.
Tensor attention_map(const Tensor& activation);
/// Divide each row of (N, F) by its L2 norm. Rows whose norm is below
/// `min_norm` become the zero vector and pass no gradient back.
Tensor normalize_rows(const Tensor& x, double min_norm);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }

/// Rows [begin, end) of the leading axis, copied (no gradient).
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
/// Gather leading-axis rows (no gradient).
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

}  // namespace alkt

#endif  // ALKT_TENSOR_HPP

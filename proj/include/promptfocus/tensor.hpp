#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  bool consumed = false;     // set on a loss after backward()
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(Node&)> backward;

  void accumulate(std::span<const double> g);
  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major double tensor with an optional gradient slot. Copies are
/// shallow handles to the same storage, like a framework tensor; use clone()
/// for an independent value.
///
/// Operations on tensors that require grad record a reverse-mode graph that
/// backward() consumes. Leaves accumulate gradients across backward calls
/// until zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;  // extent 0 (1 for scalars)
  std::size_t cols() const;  // last extent (1 for scalars and vectors)

  std::span<const double> data() const;
  /// Writable storage. Only valid on leaves; graph values are immutable.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Independent leaf copy of the values (no graph, no grad).
  Tensor clone() const;
  /// Same values, cut from the graph.
  Tensor detach() const { return clone(); }

  const char* op_name() const;
  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// While alive, operations on this thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse pass from a scalar loss. The graph is consumed; a second call on
/// the same loss throws StateError.
void backward(const Tensor& loss);

// ---- differentiable operations --------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [m×k]·[k×n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m×k]·[n×k]ᵀ
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise, same shape
Tensor scale(const Tensor& a, double s);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // [L×n] + [n] per row
/// Row r of x times p[r]: the product with p expanded along the feature axis.
Tensor mul_rows(const Tensor& x, const Tensor& p);
Tensor gelu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor concat_rows(const Tensor& top, const Tensor& bottom);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor mean_rows(const Tensor& x);                   // [L×n] -> [1×n]
Tensor broadcast_rows(const Tensor& x, std::size_t rows);  // [1×n] -> [rows×n]
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean softmax cross-entropy of logits [L×C] against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

double gelu_value(double x);

}  // namespace pf

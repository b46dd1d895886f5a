#include "promptfocus/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "promptfocus/errors.hpp"
#include "promptfocus/kernels.hpp"

namespace pf {

using detail::Node;
using kernels::Trans;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

void Node::accumulate(std::span<const double> g) {
  auto& buf = grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in tensor initializer");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }
std::size_t Tensor::rows() const { return rank() == 0 ? 1 : shape()[0]; }
std::size_t Tensor::cols() const { return rank() < 2 ? 1 : shape().back(); }
std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw StateError("mutable_data() on a non-leaf tensor produced by " + std::string(node_->op));
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw StateError("requires_grad can only be changed on leaves");
  node_->requires_grad = on;
}
bool Tensor::is_leaf() const { return node_->parents.empty() && !node_->backward; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
void Tensor::zero_grad() { node_->grad.clear(); }
const char* Tensor::op_name() const { return node_->op; }

Tensor Tensor::clone() const { return from(shape(), node_->data, false); }

// ---- graph plumbing -------------------------------------------------------

namespace {

thread_local bool g_grad_enabled = true;

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward_fn) {
  check_finite(data, op);
  auto node = std::make_shared<Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->data = std::move(data);
  const bool any = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                               [](const auto& p) { return p->requires_grad; });
  if (any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward() on an undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  }
  auto root = loss.node();
  if (root->consumed) throw StateError("backward() called twice on the same graph");
  if (!root->requires_grad) throw ContractError("loss does not depend on any tensor requiring grad");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
  // Release the graph: intermediate grads and closures are no longer needed.
  for (Node* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->parents.clear();
      n->grad.clear();
      n->consumed = true;
    }
  }
  root->consumed = true;
}

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner extents disagree for " + shape_str(a.shape()) + " · " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm(a.data(), b.data(), out, m, k, n);
  return make_result("matmul", {m, n}, std::move(out), {a.node(), b.node()},
                     [m, k, n](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       if (pa.requires_grad)
                         kernels::gemm(self.grad, pb.data, pa.grad_buffer(), m, n, k, Trans::No,
                                       Trans::Yes, true);
                       if (pb.requires_grad)
                         kernels::gemm(pa.data, self.grad, pb.grad_buffer(), k, m, n, Trans::Yes,
                                       Trans::No, true);
                     });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner extents disagree for " + shape_str(a.shape()) +
                         " · " + shape_str(b.shape()) + "ᵀ");
  }
  std::vector<double> out(m * n);
  kernels::gemm(a.data(), b.data(), out, m, k, n, Trans::No, Trans::Yes);
  return make_result("matmul_nt", {m, n}, std::move(out), {a.node(), b.node()},
                     [m, k, n](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       if (pa.requires_grad)
                         kernels::gemm(self.grad, pb.data, pa.grad_buffer(), m, n, k, Trans::No,
                                       Trans::No, true);
                       if (pb.requires_grad)
                         kernels::gemm(self.grad, pa.data, pb.grad_buffer(), n, m, k, Trans::Yes,
                                       Trans::No, true);
                     });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  auto src = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = src[i * c + j];
  return make_result("transpose", {c, r}, std::move(out), {a.node()}, [r, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result("add", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result("sub", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make_result("scale", a.shape(), std::move(out), {a.node()}, [s](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_bias");
  const std::size_t l = x.rows(), n = x.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] + bias.data()[j];
  return make_result("add_bias", x.shape(), std::move(out), {x.node(), bias.node()},
                     [l, n](Node& self) {
                       if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
                       if (self.parents[1]->requires_grad) {
                         auto& g = self.parents[1]->grad_buffer();
                         for (std::size_t i = 0; i < l; ++i)
                           for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                       }
                     });
}

Tensor mul_rows(const Tensor& x, const Tensor& p) {
  require_rank2(x, "mul_rows");
  const std::size_t k = x.rows(), d = x.cols();
  if (p.numel() != k) {
    throw DimensionError("mul_rows: weights " + shape_str(p.shape()) + " do not match rows of " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.data()[i * d + j] * p.data()[i];
  return make_result("mul_rows", x.shape(), std::move(out), {x.node(), p.node()},
                     [k, d](Node& self) {
                       Node& px = *self.parents[0];
                       Node& pp = *self.parents[1];
                       if (px.requires_grad) {
                         auto& g = px.grad_buffer();
                         for (std::size_t i = 0; i < k; ++i)
                           for (std::size_t j = 0; j < d; ++j)
                             g[i * d + j] += self.grad[i * d + j] * pp.data[i];
                       }
                       if (pp.requires_grad) {
                         auto& g = pp.grad_buffer();
                         for (std::size_t i = 0; i < k; ++i)
                           for (std::size_t j = 0; j < d; ++j)
                             g[i] += self.grad[i * d + j] * px.data[i * d + j];
                       }
                     });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(x.data()[i]);
  return make_result("gelu", x.shape(), std::move(out), {x.node()}, [](Node& self) {
    Node& px = *self.parents[0];
    auto& g = px.grad_buffer();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = px.data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank2(x, "softmax_rows");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(x.data().begin(), x.data().end());
  kernels::softmax_rows(out, r, c);
  return make_result("softmax_rows", x.shape(), std::move(out), {x.node()}, [r, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.data.data() + i * c;
      const double* gy = self.grad.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  require_rank2(top, "concat_rows");
  require_rank2(bottom, "concat_rows");
  if (top.cols() != bottom.cols()) {
    throw DimensionError("concat_rows: widths differ for " + shape_str(top.shape()) + " and " +
                         shape_str(bottom.shape()));
  }
  const std::size_t split = top.numel();
  std::vector<double> out;
  out.reserve(top.numel() + bottom.numel());
  out.insert(out.end(), top.data().begin(), top.data().end());
  out.insert(out.end(), bottom.data().begin(), bottom.data().end());
  return make_result("concat_rows", {top.rows() + bottom.rows(), top.cols()}, std::move(out),
                     {top.node(), bottom.node()}, [split](Node& self) {
                       std::span<const double> g(self.grad);
                       if (self.parents[0]->requires_grad)
                         self.parents[0]->accumulate(g.subspan(0, split));
                       if (self.parents[1]->requires_grad)
                         self.parents[1]->accumulate(g.subspan(split));
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::vector<std::size_t> widths;
  std::vector<std::shared_ptr<Node>> nodes;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != r) {
      throw DimensionError("concat_cols: row counts differ (" + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()) + ")");
    }
    widths.push_back(p.cols());
    nodes.push_back(p.node());
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (std::size_t t = 0; t < parts.size(); ++t) {
    const std::size_t w = widths[t];
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(parts[t].data().data() + i * w, w, out.data() + i * total + off);
    off += w;
  }
  return make_result("concat_cols", {r, total}, std::move(out), std::move(nodes),
                     [r, total, widths](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t t = 0; t < widths.size(); ++t) {
                         const std::size_t w = widths[t];
                         if (self.parents[t]->requires_grad) {
                           auto& g = self.parents[t]->grad_buffer();
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < w; ++j)
                               g[i * w + j] += self.grad[i * total + off + j];
                         }
                         off += w;
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank2(x, "slice_cols");
  const std::size_t r = x.rows(), c = x.cols();
  if (count == 0 || start + count > c) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + shape_str(x.shape()));
  }
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.data().data() + i * c + start, count, out.data() + i * count);
  return make_result("slice_cols", {r, count}, std::move(out), {x.node()},
                     [r, c, start, count](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < count; ++j)
                           g[i * c + start + j] += self.grad[i * count + j];
                     });
}

Tensor mean_rows(const Tensor& x) {
  require_rank2(x, "mean_rows");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x.data()[i * c + j];
  for (auto& v : out) v /= static_cast<double>(r);
  return make_result("mean_rows", {1, c}, std::move(out), {x.node()}, [r, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j] * inv;
  });
}

Tensor broadcast_rows(const Tensor& x, std::size_t rows) {
  if (x.numel() != x.cols() || rows == 0) {
    throw DimensionError("broadcast_rows: expected a single row, got " + shape_str(x.shape()));
  }
  const std::size_t c = x.cols();
  std::vector<double> out(rows * c);
  for (std::size_t i = 0; i < rows; ++i) std::copy_n(x.data().data(), c, out.data() + i * c);
  return make_result("broadcast_rows", {rows, c}, std::move(out), {x.node()},
                     [rows, c](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < rows; ++i)
                         for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
                     });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result("sum", {}, {s}, {x.node()}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank2(logits, "cross_entropy");
  const std::size_t l = logits.rows(), c = logits.cols();
  if (labels.size() != l) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         shape_str(logits.shape()));
  }
  std::vector<double> prob(logits.data().begin(), logits.data().end());
  double loss = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw ContractError("cross_entropy: label " + std::to_string(y) + " out of range");
    }
    const double* z = logits.data().data() + i * c;
    const double mx = *std::max_element(z, z + c);
    double se = 0.0;
    for (std::size_t j = 0; j < c; ++j) se += std::exp(z[j] - mx);
    loss += mx + std::log(se) - z[y];
  }
  kernels::softmax_rows(prob, l, c);
  loss /= static_cast<double>(l);
  std::vector<int> ys(labels.begin(), labels.end());
  return make_result("cross_entropy", {}, {loss}, {logits.node()},
                     [l, c, prob = std::move(prob), ys = std::move(ys)](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       const double s = self.grad[0] / static_cast<double>(l);
                       for (std::size_t i = 0; i < l; ++i) {
                         for (std::size_t j = 0; j < c; ++j) {
                           const double onehot = static_cast<int>(j) == ys[i] ? 1.0 : 0.0;
                           g[i * c + j] += s * (prob[i * c + j] - onehot);
                         }
                       }
                     });
}

}  // namespace pf

#pragma once

#include <atomic>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace bfan {

// Broken preconditions and invariant violations (CLI exit code 3).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or unreadable data: files, codecs, checkpoints (CLI exit code 2).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad run configuration: unknown keys, unparsable values (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized like value once backward reaches the node
  bool requires_grad = false;
  std::uint64_t seq = 0;  // creation order; doubles as a topological order
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
};

inline std::uint64_t next_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

}  // namespace detail

inline long long shape_numel(const std::vector<int>& shape) {
  long long n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense N-D double tensor (NCHW for image-like data) with reverse-mode
// autodiff over the dynamically recorded op graph. Value-semantic handle to a
// shared node; ops in ops.hpp append nodes, backward() walks them in reverse
// creation order.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }

  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false) {
    validate_shape(shape);
    auto n = std::make_shared<detail::Node>();
    n->value.assign(static_cast<size_t>(shape_numel(shape)), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    n->seq = detail::next_seq();
    return Tensor(std::move(n));
  }

  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false) {
    validate_shape(shape);
    if (shape_numel(shape) != static_cast<long long>(data.size()))
      throw ContractViolation("tensor: data length " + std::to_string(data.size()) +
                              " does not match shape " + shape_str(shape));
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    n->seq = detail::next_seq();
    return Tensor(std::move(n));
  }

  static Tensor scalar(double v, bool requires_grad = false) { return full({1}, v, requires_grad); }

  bool defined() const { return static_cast<bool>(n_); }

  const std::vector<int>& shape() const { return node().shape; }
  int dim(int i) const { return node().shape.at(static_cast<size_t>(i)); }
  int ndim() const { return static_cast<int>(node().shape.size()); }
  long long size() const { return static_cast<long long>(node().value.size()); }

  double* data() { return node().value.data(); }
  const double* data() const { return node().value.data(); }
  std::vector<double>& values() { return node().value; }
  const std::vector<double>& values() const { return node().value; }

  double item() const {
    if (size() != 1)
      throw ContractViolation("tensor: item() requires a scalar, got shape " + shape_str(shape()));
    return node().value[0];
  }

  bool requires_grad() const { return node().requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    node().requires_grad = rg;
    return *this;
  }

  bool has_grad() const { return defined() && !n_->grad.empty(); }
  const std::vector<double>& grad() const {
    if (!has_grad())
      throw ContractViolation("tensor: grad accessed before backward populated it");
    return n_->grad;
  }
  void zero_grad() {
    if (defined()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
  }

  // Accumulates gradients on every requires_grad tensor reachable from this
  // scalar. Fan-out adds; call zero_grad on leaves between steps.
  void backward() const;

  detail::Node* node_ptr() const { return n_.get(); }
  const std::shared_ptr<detail::Node>& shared_node() const { return n_; }

  explicit Tensor(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}

 private:
  detail::Node& node() {
    if (!n_) throw ContractViolation("tensor: use of an undefined tensor");
    return *n_;
  }
  const detail::Node& node() const {
    if (!n_) throw ContractViolation("tensor: use of an undefined tensor");
    return *n_;
  }

  static void validate_shape(const std::vector<int>& shape) {
    if (shape.empty()) throw ContractViolation("tensor: shape must have at least one dimension");
    for (int d : shape)
      if (d <= 0)
        throw ContractViolation("tensor: dimensions must be positive, got " + shape_str(shape));
  }

  std::shared_ptr<detail::Node> n_;
};

namespace detail {

inline void ensure_grad(Node& n) {
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
}

}  // namespace detail

// Recorded op nodes reaching t (leaves included), oldest first.
inline std::vector<const detail::Node*> recorded_graph(const Tensor& t) {
  std::vector<const detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<const detail::Node*> stack{t.node_ptr()};
  while (!stack.empty()) {
    const detail::Node* n = stack.back();
    stack.pop_back();
    if (!n || !seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& in : n->inputs) stack.push_back(in.get());
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq < b->seq; });
  return order;
}

inline void Tensor::backward() const {
  if (!defined()) throw ContractViolation("tensor: backward on an undefined tensor");
  if (size() != 1)
    throw ContractViolation("tensor: backward requires a scalar loss, got shape " +
                            shape_str(shape()));
  if (!n_->requires_grad)
    throw ContractViolation("tensor: backward on a tensor detached from any differentiable graph");

  // Reachable grad-requiring nodes; creation order is a topological order
  // because ops never mutate recorded tensors.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{n_.get()};
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& in : n->inputs)
      if (in->requires_grad) stack.push_back(in.get());
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  detail::ensure_grad(*n_);
  n_->grad[0] += 1.0;
  for (detail::Node* n : order) {
    if (!n->backward_fn) continue;
    detail::ensure_grad(*n);
    for (const auto& in : n->inputs)
      if (in->requires_grad) detail::ensure_grad(*in);
    n->backward_fn(*n);
  }
}

// Forward results must stay finite; NaN/Inf is an error state, not a value.
inline void check_finite(const char* op, const std::vector<double>& values) {
  for (double v : values)
    if (!std::isfinite(v))
      throw ContractViolation(std::string(op) + ": non-finite value produced in forward pass");
}

}  // namespace bfan

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tsf/error.hpp"

namespace tsf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs[i]->grad for inputs that require it.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

inline thread_local bool grad_enabled = true;

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_enabled; }

/// Dense row-major array of doubles. Copies share the underlying node, so a
/// Tensor behaves like a handle; use `clone()` for an independent leaf.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    for (auto d : shape)
      if (d == 0) fail(ErrorKind::dimension, "tensor shape " + shape_str(shape) + " has a zero dimension");
    if (shape_size(shape) != data.size())
      fail(ErrorKind::dimension, "tensor shape " + shape_str(shape) + " does not match " +
                                     std::to_string(data.size()) + " values");
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }
  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    const auto n = v.size();
    return Tensor({n}, std::move(v), requires_grad);
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v, bool requires_grad = false) {
    return Tensor({rows, cols}, std::move(v), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const { return rank() == 1 ? 1 : node_->shape[0]; }
  std::size_t cols() const { return node_->shape.back(); }

  std::span<const double> data() const { return node_->data; }
  /// Direct write access; reserved for optimizers and initializers acting on leaves.
  std::span<double> mutable_data() { return node_->data; }
  const std::vector<double>& values() const { return node_->data; }

  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  double item() const {
    if (size() != 1) fail(ErrorKind::contract, "item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient view; all zeros when nothing has been accumulated yet.
  std::vector<double> grad() const {
    return node_->grad.empty() ? std::vector<double>(size(), 0.0) : node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  Tensor clone(bool requires_grad = false) const { return Tensor(shape(), node_->data, requires_grad); }
  /// Same values, cut from the graph.
  Tensor detach() const { return clone(false); }

  const char* op_name() const { return node_->op; }
  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend Tensor make_op_result(Shape, std::vector<double>, const char*, std::initializer_list<Tensor>,
                               std::function<void(detail::Node&)>);
  std::shared_ptr<detail::Node> node_;
};

/// Builds the output of a differentiable operation. Rejects non-finite results
/// and records the backward rule only when an input participates in the graph.
inline Tensor make_op_result(Shape shape, std::vector<double> data, const char* op,
                             std::initializer_list<Tensor> inputs,
                             std::function<void(detail::Node&)> backward) {
  for (double v : data)
    if (!std::isfinite(v)) fail(ErrorKind::numeric, std::string(op) + " produced a non-finite value");
  Tensor out(std::move(shape), std::move(data));
  out.node_->op = op;
  if (!detail::grad_enabled) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->backward = std::move(backward);
  out.node_->inputs.reserve(inputs.size());
  for (const auto& t : inputs) out.node_->inputs.push_back(t.node_ptr());
  return out;
}

/// Variadic-input flavour for concatenations.
inline Tensor make_op_result(Shape shape, std::vector<double> data, const char* op,
                             const std::vector<Tensor>& inputs, std::function<void(detail::Node&)> backward) {
  Tensor out = make_op_result(std::move(shape), std::move(data), op, {}, {});
  if (!detail::grad_enabled) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  auto* n = out.node();
  n->requires_grad = true;
  n->backward = std::move(backward);
  for (const auto& t : inputs) n->inputs.push_back(t.node_ptr());
  return out;
}

/// Recorded operations reachable from a loss, in topological order (inputs
/// before consumers). Running it visits each operation once, last to first.
class Tape {
 public:
  static Tape record(const Tensor& loss) {
    Tape tape;
    if (!loss.requires_grad()) return tape;
    std::unordered_set<const detail::Node*> seen;
    // iterative post-order DFS; graphs from unrolled recurrences get deep
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node(), 0}};
    seen.insert(loss.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        detail::Node* child = node->inputs[next++].get();
        if (child->requires_grad && !child->is_leaf() && seen.insert(child).second)
          stack.emplace_back(child, 0);
        continue;
      }
      tape.ops_.push_back(node);
      stack.pop_back();
    }
    return tape;
  }

  std::size_t size() const { return ops_.size(); }
  const std::vector<detail::Node*>& ops() const { return ops_; }

  /// Seeds d(loss)/d(loss) = 1 and propagates. Leaf gradients accumulate across calls.
  void run(const Tensor& loss) const {
    if (loss.size() != 1)
      fail(ErrorKind::contract, "backward needs a scalar loss, got shape " + shape_str(loss.shape()));
    for (auto* n : ops_) n->grad.assign(n->data.size(), 0.0);
    if (ops_.empty()) {
      if (loss.requires_grad()) loss.node()->ensure_grad()[0] += 1.0;
      return;
    }
    loss.node()->grad[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)->backward(**it);
  }

 private:
  std::vector<detail::Node*> ops_;
};

inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    fail(ErrorKind::contract, "backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  Tape::record(loss).run(loss);
}

}  // namespace tsf

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "hifi/common.hpp"

namespace hifi::nn {

/// Shared storage behind a Tensor handle. Each op produces a fresh node whose
/// backward_fn scatters the node's grad into its parents' grads.
template <typename T>
struct TensorNode {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on first use when requires_grad
  bool requires_grad = false;
  std::string name;  // set for leaf parameters
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;

  std::size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

/// Thread-local switch that disables taping (used for inference passes).
inline bool& grad_mode_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : prev_(grad_mode_enabled()) { grad_mode_enabled() = false; }
  ~NoGradGuard() { grad_mode_enabled() = prev_; }

 private:
  bool prev_;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(std::vector<int> shape, T v, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode<T>>();
    std::size_t count = 1;
    for (int d : shape) {
      if (d <= 0) throw ShapeError("non-positive tensor dimension");
      count *= static_cast<std::size_t>(d);
    }
    n->shape = std::move(shape);
    n->value.assign(count, v);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor from(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
    auto t = zeros(shape, requires_grad);
    if (data.size() != t.numel()) throw ShapeError("data length does not match shape");
    t.node_->value = std::move(data);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t numel() const { return node_->value.size(); }

  T* data() { return node_->value.data(); }
  const T* data() const { return node_->value.data(); }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  T* grad() {
    node_->ensure_grad();
    return node_->grad.data();
  }
  const std::vector<T>& grad_values() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  const std::string& name() const { return node_->name; }
  void set_name(std::string s) { node_->name = std::move(s); }

  std::shared_ptr<TensorNode<T>> node() const { return node_; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor with numel != 1");
    return node_->value[0];
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < node_->shape.size(); ++i)
      os << (i ? "," : "") << node_->shape[i];
    os << "]";
    return os.str();
  }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

/// Makes the result node of an op. Tapes parents/backward only when grad mode
/// is on and at least one input needs gradients.
template <typename T>
Tensor<T> make_op_result(std::vector<int> shape,
                         std::vector<Tensor<T>> inputs,
                         const std::function<void(TensorNode<T>&)>& fill_value,
                         const std::function<std::function<void()>(
                             std::shared_ptr<TensorNode<T>>)>& make_backward) {
  auto out = Tensor<T>::zeros(std::move(shape));
  auto node = out.node();
  fill_value(*node);
  bool needs = false;
  if (grad_mode_enabled()) {
    for (const auto& in : inputs)
      if (in.requires_grad()) needs = true;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = make_backward(node);
  }
  return out;
}

/// Reverse-mode graph: built once from a root, runs each recorded op's
/// backward exactly once in reverse topological order.
template <typename T>
class GradGraph {
 public:
  static GradGraph build(const Tensor<T>& root) {
    GradGraph g;
    std::unordered_set<TensorNode<T>*> seen;
    // Iterative post-order DFS; child visit order is the parent list order,
    // so the topological order (and thus float accumulation order) is fixed.
    struct Frame {
      TensorNode<T>* node;
      std::size_t next_parent;
    };
    std::vector<Frame> stack;
    auto push = [&](TensorNode<T>* n) {
      if (n && n->requires_grad && seen.insert(n).second)
        stack.push_back({n, 0});
    };
    push(root.node().get());
    // A node is appended after all its parents, giving leaves-first order.
    std::vector<TensorNode<T>*> order;
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        TensorNode<T>* p = f.node->parents[f.next_parent++].get();
        if (p && p->requires_grad && seen.insert(p).second)
          stack.push_back({p, 0});
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
    g.order_ = std::move(order);
    g.root_ = root.node();
    return g;
  }

  /// Seeds d(root)/d(root) = 1 and propagates to all leaves.
  void backward() {
    for (TensorNode<T>* n : order_) n->ensure_grad();
    for (T& gv : root_->grad) gv = T(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      if ((*it)->backward_fn) (*it)->backward_fn();
    }
  }

  std::size_t size() const { return order_.size(); }

 private:
  std::vector<TensorNode<T>*> order_;
  std::shared_ptr<TensorNode<T>> root_;
};

/// Convenience: build the graph from root and run one backward pass.
template <typename T>
void backward(const Tensor<T>& root) {
  GradGraph<T>::build(root).backward();
}

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

}  // namespace hifi::nn

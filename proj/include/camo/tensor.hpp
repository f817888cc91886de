#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "camo/error.hpp"

namespace camo {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d > 0 ? d : 0);
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major tensor recording into a reverse-mode tape. A Tensor is a
// cheap handle onto a shared node; ops never mutate their inputs, they
// allocate fresh output nodes, so the recorded graph is an immutable DAG.
// Graph memory is reclaimed by RAII once the last handle to a subgraph dies.
//
// Leaf storage may be updated in place between graphs (optimizer steps)
// through values_mut(); interior nodes reject that.
template <typename T>
class Tensor {
 public:
  struct Node;
  // Receives the node whose grad is already accumulated and pushes it into
  // the parents' grad buffers.
  using BackFn = std::function<void(Node&)>;

  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated on first use, same length as value
    bool requires_grad = false;
    bool leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    BackFn backprop;

    std::vector<T>& ensure_grad() {
      if (grad.size() != value.size()) grad.assign(value.size(), T(0));
      return grad;
    }
  };

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value.assign(numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (data.size() != numel(shape)) {
      throw DimError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
    }
    node_->value = std::move(data);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<T>{v}, requires_grad);
  }

  // Entry point for ops: creates an interior node. Parents and the backward
  // closure are retained only when some parent participates in the tape.
  static Tensor from_op(Shape shape, std::vector<T> value,
                        const std::vector<Tensor>& parents, BackFn backprop) {
    if (value.size() != numel(shape)) {
      throw DimError("op output: value length does not match shape " +
                     shape_str(shape));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->leaf = false;
    for (const auto& p : parents) {
      if (p.defined() && p.requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
    if (n->requires_grad) {
      for (const auto& p : parents)
        if (p.defined()) n->parents.push_back(p.node_);
      n->backprop = std::move(backprop);
    }
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return check().shape; }
  int dim(std::size_t i) const {
    const auto& s = check().shape;
    if (i >= s.size())
      throw DimError("dim index " + std::to_string(i) + " out of rank " +
                     std::to_string(s.size()));
    return s[i];
  }
  std::size_t size() const { return check().value.size(); }
  std::size_t rank() const { return check().shape.size(); }

  const std::vector<T>& values() const { return check().value; }

  // In-place mutation, leaves only (optimizer updates between graphs).
  std::vector<T>& values_mut() {
    Node& n = check();
    if (!n.leaf) throw UsageError("values_mut: only leaf tensors are mutable");
    return n.value;
  }

  bool requires_grad() const { return check().requires_grad; }
  bool is_leaf() const { return check().leaf; }

  void set_requires_grad(bool rg) {
    Node& n = check();
    if (!n.leaf) throw UsageError("set_requires_grad: not a leaf");
    n.requires_grad = rg;
  }

  const std::vector<T>& grad() const {
    Node& n = check();
    n.ensure_grad();
    return n.grad;
  }

  void zero_grad() {
    Node& n = check();
    n.grad.assign(n.value.size(), T(0));
  }

  T item() const {
    const Node& n = check();
    if (n.value.size() != 1)
      throw UsageError("item: tensor has " + std::to_string(n.value.size()) +
                       " elements");
    return n.value[0];
  }

  // Reverse pass from a scalar. Leaf grads accumulate across repeated calls;
  // interior grads are reset on every call.
  void backward() const {
    Node& root = check();
    if (root.value.size() != 1)
      throw UsageError("backward: loss must be scalar, got " +
                       shape_str(root.shape));
    if (!root.requires_grad) return;

    std::vector<Node*> order = topo_order(&root);
    for (Node* n : order) {
      if (!n->leaf) n->grad.assign(n->value.size(), T(0));
      else n->ensure_grad();
    }
    root.ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backprop) n->backprop(*n);
    }
  }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  Node& check() const {
    if (!node_) throw UsageError("undefined tensor");
    return *node_;
  }

  // Iterative post-order DFS over the requires_grad subgraph. The visit
  // order is fixed by graph construction order, so gradient accumulation is
  // deterministic.
  static std::vector<Node*> topo_order(Node* root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> done;
    struct Frame {
      Node* n;
      std::size_t next;
    };
    std::vector<Frame> stack{{root, 0}};
    done.insert(root);
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.n->parents.size()) {
        Node* p = f.n->parents[f.next++].get();
        if (p->requires_grad && done.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(f.n);
        stack.pop_back();
      }
    }
    return order;  // parents before children; reverse for backprop
  }

  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace camo

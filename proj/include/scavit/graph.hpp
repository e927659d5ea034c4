#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "scavit/tensor.hpp"

namespace scavit {

class Graph;

/// Handle to a value recorded on a Graph. Cheap to copy; valid while the
/// graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only tape of operations for one forward pass.
///
/// Inputs of a node always precede it, so the reverse of the append order is
/// a valid topological order for backward. A graph built with
/// `record_gradients = false` stores values only; it is what inference and the
/// finite-difference oracle use.
class Graph {
 public:
  /// Local gradient rule: receives the node's output value and adjoint and
  /// pushes contributions into the inputs' adjoints through `Graph::adjoint`.
  using BackwardFn = std::function<void(Graph&, const Tensor& out, std::span<const double> dout)>;

  explicit Graph(bool record_gradients = true);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool records_gradients() const { return record_; }

  /// A value that never receives gradient.
  Var constant(Tensor value);
  /// Binds an externally owned tensor; backward accumulates into its grad when
  /// it requires grad. Binding the same tensor twice returns the same Var.
  Var param(Tensor& tensor);

  /// Used by operations to append their result.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }

  /// Mutable adjoint of `v`, zero-initialized on first access. Empty when `v`
  /// does not need gradient.
  std::span<double> adjoint(Var v);

  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor* bound = nullptr;
    bool needs_grad = false;
    Buffer adjoint;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> bound_ids_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }

}  // namespace scavit

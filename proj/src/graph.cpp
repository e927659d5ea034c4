#include "scavit/graph.hpp"

#include "scavit/errors.hpp"

namespace scavit {

Graph::Graph(bool record_gradients) : record_(record_gradients) { nodes_.reserve(256); }

Var Graph::constant(Tensor value) {
  value.set_requires_grad(false);
  value.clear_grad();
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Tensor& tensor) {
  if (auto it = bound_ids_.find(&tensor); it != bound_ids_.end()) {
    return Var(this, it->second);
  }
  Tensor copy =
      Tensor::unchecked(tensor.shape(), Buffer(tensor.values().begin(), tensor.values().end()));
  const bool tracked = record_ && tensor.requires_grad();
  nodes_.push_back(Node{std::move(copy), {}, {}, tracked ? &tensor : nullptr, tracked, {}});
  bound_ids_.emplace(&tensor, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  if (record_) {
    for (const Var& in : inputs) {
      if (&in.graph() != this) throw ValueError("operands belong to different graphs");
      node.inputs.push_back(in.id());
      node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
    }
    if (node.needs_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::span<double> Graph::adjoint(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.needs_grad) return {};
  if (n.adjoint.empty()) n.adjoint.assign(n.value.numel(), 0.0);
  return n.adjoint;
}

void Graph::backward(Var root) {
  if (nodes_.empty()) throw ValueError("backward on an empty graph");
  if (&root.graph() != this) throw ValueError("root belongs to a different graph");
  if (root.value().numel() != 1) {
    throw ShapeError("backward needs a scalar root, got shape " +
                     shape_to_string(root.value().shape()));
  }
  if (!nodes_[root.id()].needs_grad) return;
  adjoint(root)[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.adjoint.empty()) continue;
    if (n.backward) n.backward(*this, n.value, n.adjoint);
    if (n.bound) n.bound->accumulate_grad(n.adjoint);
  }
}

}  // namespace scavit

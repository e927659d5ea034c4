#pragma once

#include <concepts>
#include <cstddef>
#include <string>
#include <type_traits>

#include "scavit/graph.hpp"
#include "scavit/rng.hpp"

namespace scavit {

/// Affine map x W + b with W stored as [din, dout].
struct LinearParams {
  Tensor weight;
  Tensor bias;

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }

  /// Glorot-uniform weight, zero bias.
  static LinearParams xavier(std::size_t din, std::size_t dout, Rng& rng);
  /// Rectangular identity weight (ones on the leading diagonal), zero bias.
  static LinearParams identity(std::size_t din, std::size_t dout);
  static LinearParams zeros(std::size_t din, std::size_t dout);
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  static LayerNormParams unit(std::size_t dim, double eps = 1e-5);
};

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

Var apply(Var x, LinearParams& p);
Var apply(Var x, LayerNormParams& p);

/// Visits (name, tensor) for every learnable tensor of a layer, in a fixed
/// order. Used for checkpoints, optimizers and gradient checks.
template <class P, class Visitor>
  requires std::same_as<std::remove_const_t<P>, LinearParams>
void visit_parameters(P& p, const std::string& prefix, Visitor&& visit) {
  visit(prefix + ".weight", p.weight);
  visit(prefix + ".bias", p.bias);
}

template <class P, class Visitor>
  requires std::same_as<std::remove_const_t<P>, LayerNormParams>
void visit_parameters(P& p, const std::string& prefix, Visitor&& visit) {
  visit(prefix + ".gamma", p.gamma);
  visit(prefix + ".beta", p.beta);
}

}  // namespace scavit

#include "scavit/layers.hpp"

#include <cmath>

#include "scavit/ops.hpp"

namespace scavit {

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (double& v : w) v = rng.uniform(-a, a);
  return Tensor({fan_in, fan_out}, std::move(w), true);
}

LinearParams LinearParams::xavier(std::size_t din, std::size_t dout, Rng& rng) {
  return {xavier_uniform(din, dout, rng), Tensor::zeros({dout}, true)};
}

LinearParams LinearParams::identity(std::size_t din, std::size_t dout) {
  std::vector<double> w(din * dout, 0.0);
  for (std::size_t i = 0; i < std::min(din, dout); ++i) w[i * dout + i] = 1.0;
  return {Tensor({din, dout}, std::move(w), true), Tensor::zeros({dout}, true)};
}

LinearParams LinearParams::zeros(std::size_t din, std::size_t dout) {
  return {Tensor::zeros({din, dout}, true), Tensor::zeros({dout}, true)};
}

LayerNormParams LayerNormParams::unit(std::size_t dim, double eps) {
  return {Tensor::filled({dim}, 1.0, true), Tensor::zeros({dim}, true), eps};
}

Var apply(Var x, LinearParams& p) {
  Graph& g = x.graph();
  return ops::linear(x, g.param(p.weight), g.param(p.bias));
}

Var apply(Var x, LayerNormParams& p) {
  Graph& g = x.graph();
  return ops::layer_norm(x, g.param(p.gamma), g.param(p.beta), p.eps);
}

}  // namespace scavit

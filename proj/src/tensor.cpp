#include "scavit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scavit/errors.hpp"

namespace scavit {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::unchecked(Shape shape, std::vector<double> values) {
  return unchecked(std::move(shape), Buffer(values.begin(), values.end()));
}

Tensor Tensor::unchecked(Shape shape, Buffer values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_to_string(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.values_ = std::move(values);
  return t;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  *this = unchecked(std::move(shape), std::move(values));
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValueError("leaf tensor contains a non-finite value");
  }
  requires_grad_ = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_to_string(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

std::size_t Tensor::rows() const {
  const std::size_t c = cols();
  return c == 0 ? 0 : values_.size() / c;
}

double Tensor::at(std::size_t row, std::size_t col) const { return values_[row * cols() + col]; }

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ShapeError("item() needs a single-element tensor, shape is " + shape_to_string(shape_));
  }
  return values_[0];
}

std::span<const double> Tensor::grad() const {
  if (!grad_) return {};
  return *grad_;
}

std::span<double> Tensor::mutable_grad() {
  if (!grad_) grad_.emplace(values_.size(), 0.0);
  return *grad_;
}

void Tensor::accumulate_grad(std::span<const double> delta) {
  if (delta.size() != values_.size()) {
    throw ShapeError("gradient length mismatch for shape " + shape_to_string(shape_));
  }
  auto g = mutable_grad();
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

void Tensor::zero_grad() {
  if (grad_) {
    std::fill(grad_->begin(), grad_->end(), 0.0);
  } else {
    grad_.emplace(values_.size(), 0.0);
  }
}

}  // namespace scavit

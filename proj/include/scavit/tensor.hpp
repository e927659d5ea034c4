#pragma once

#include <cstddef>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scavit {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned allocation for numeric buffers.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Leaf tensors built through the public constructors reject NaN/Inf.
/// Results of graph operations are built with `unchecked`, which only
/// enforces the shape/size invariant so that non-finite intermediates can
/// propagate to the training-loop guard.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor unchecked(Shape shape, std::vector<double> values);
  static Tensor unchecked(Shape shape, Buffer values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return values_.size(); }

  /// Size of the trailing dimension and the number of rows it partitions.
  std::size_t cols() const;
  std::size_t rows() const;

  std::span<const double> values() const { return values_; }
  std::span<double> mutable_values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag) { requires_grad_ = flag; }

  bool has_grad() const { return grad_.has_value(); }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void accumulate_grad(std::span<const double> delta);
  void zero_grad();
  void clear_grad() { grad_.reset(); }

 private:
  Shape shape_;
  Buffer values_;
  bool requires_grad_ = false;
  std::optional<Buffer> grad_;
};

}  // namespace scavit

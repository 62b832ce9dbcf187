#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jdr/error.hpp"

namespace jdr {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array. The element type is fixed at construction through
/// the template parameter; only float and double are instantiated.
///
/// A default-constructed tensor has shape {1} and holds a single zero, so the
/// rank >= 1 / extent >= 1 invariant always holds.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : shape_{1}, data_(1, T{0}) {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> data);
  Tensor(Shape shape, T fill);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  /// Multi-index access; bounds are checked.
  T& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
  const T& at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }
  T& at(std::span<const std::size_t> index) { return data_[offset(index)]; }
  const T& at(std::span<const std::size_t> index) const { return data_[offset(index)]; }

  std::vector<std::size_t> strides() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  /// Releases the storage; used by reshape to avoid a copy.
  std::vector<T> take_data() && { return std::move(data_); }

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t offset(std::span<const std::size_t> index) const;
  std::size_t offset(std::initializer_list<std::size_t> index) const {
    return offset(std::span<const std::size_t>(index.begin(), index.size()));
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Pairs an axis of the left operand with an axis of the right operand.
struct AxisPair {
  std::size_t a;
  std::size_t b;
};

/// Generalized index contraction. The result carries the free axes of `a` in
/// order followed by the free axes of `b`; if every axis is paired the result
/// has shape {1}. Rows of the underlying product run in parallel.
template <typename T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, std::span<const AxisPair> pairing);

template <typename T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, std::initializer_list<AxisPair> pairing) {
  return contract(a, b, std::span<const AxisPair>(pairing.begin(), pairing.size()));
}

/// Straight multi-index loop with no reordering or threading. Kept as the
/// reference the parallel contraction is tested against.
template <typename T>
Tensor<T> contract_serial(const Tensor<T>& a, const Tensor<T>& b, std::span<const AxisPair> pairing);

template <typename T>
Tensor<T> reshape(Tensor<T> a, Shape new_shape);

/// Reorders axes: result axis i is input axis `order[i]`.
template <typename T>
Tensor<T> permute(const Tensor<T>& a, std::span<const std::size_t> order);

template <typename T>
Tensor<T> permute(const Tensor<T>& a, std::initializer_list<std::size_t> order) {
  return permute(a, std::span<const std::size_t>(order.begin(), order.size()));
}

/// n x n identity matrix.
template <typename T>
Tensor<T> identity_matrix(std::size_t n);

/// max |a - b|; shapes must match.
template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

/// Row-major C[m x n] += A[m x k] * B[k x n], OpenMP over rows of C.
template <typename T>
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

/// Same product, single-threaded triple loop.
template <typename T>
void gemm_accumulate_serial(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

}  // namespace jdr

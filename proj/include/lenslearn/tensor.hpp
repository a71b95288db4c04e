#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lenslearn/errors.hpp"

namespace lenslearn {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array. Image tensors use batch x channels x height x width.
// The gradient buffer is absent until ensure_grad() is called.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // NCHW element access; rank must be 4.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  bool has_grad() const { return has_grad_; }
  void ensure_grad();
  void zero_grad();
  std::span<T> grad() { return grad_; }
  std::span<const T> grad() const { return grad_; }

  // Same data, new shape with the same element count.
  BasicTensor reshaped(Shape shape) const;
  void fill(T value);

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
  bool has_grad_ = false;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Throws DimensionError naming both shapes when they differ.
void require_same_shape(const Shape& a, const Shape& b, const char* what);
void require_rank4(const Shape& s, const char* what);

// Slice of items [begin, end) along axis 0.
template <typename T>
BasicTensor<T> slice_batch(const BasicTensor<T>& t, std::size_t begin, std::size_t end);

// Gathers the listed items along axis 0.
template <typename T>
BasicTensor<T> gather_batch(const BasicTensor<T>& t, std::span<const std::size_t> indices);

template <typename T>
bool all_finite(const BasicTensor<T>& t);

}  // namespace lenslearn

#include "lenslearn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lenslearn {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

template <typename T>
void BasicTensor<T>::ensure_grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), T(0));
  has_grad_ = true;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return BasicTensor<T>(std::move(shape), data_);
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": shape " + shape_string(a) + " does not match " +
                         shape_string(b));
  }
}

void require_rank4(const Shape& s, const char* what) {
  if (s.size() != 4) {
    throw DimensionError(std::string(what) + ": expected NCHW tensor, got " + shape_string(s));
  }
}

template <typename T>
BasicTensor<T> slice_batch(const BasicTensor<T>& t, std::size_t begin, std::size_t end) {
  if (t.rank() == 0 || begin > end || end > t.dim(0)) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_string(t.shape()));
  }
  Shape shape = t.shape();
  const std::size_t item = t.size() / std::max<std::size_t>(shape[0], 1);
  shape[0] = end - begin;
  std::vector<T> data(t.data().begin() + begin * item, t.data().begin() + end * item);
  return BasicTensor<T>(std::move(shape), std::move(data));
}

template <typename T>
BasicTensor<T> gather_batch(const BasicTensor<T>& t, std::span<const std::size_t> indices) {
  Shape shape = t.shape();
  const std::size_t item = shape[0] ? t.size() / shape[0] : shape_numel(Shape(shape.begin() + 1, shape.end()));
  shape[0] = indices.size();
  std::vector<T> data;
  data.reserve(indices.size() * item);
  for (auto i : indices) {
    if (i >= t.dim(0)) throw DimensionError("gather index " + std::to_string(i) + " out of range");
    data.insert(data.end(), t.data().begin() + i * item, t.data().begin() + (i + 1) * item);
  }
  return BasicTensor<T>(std::move(shape), std::move(data));
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template BasicTensor<float> slice_batch(const BasicTensor<float>&, std::size_t, std::size_t);
template BasicTensor<double> slice_batch(const BasicTensor<double>&, std::size_t, std::size_t);
template BasicTensor<float> gather_batch(const BasicTensor<float>&, std::span<const std::size_t>);
template BasicTensor<double> gather_batch(const BasicTensor<double>&, std::span<const std::size_t>);
template bool all_finite(const BasicTensor<float>&);
template bool all_finite(const BasicTensor<double>&);

}  // namespace lenslearn

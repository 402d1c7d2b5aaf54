#include "facefuse/nn/tensor.hpp"

#include <algorithm>

#include "facefuse/error.hpp"

namespace facefuse::nn {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape.size()) {
    throw ShapeMismatch("tensor buffer of " + std::to_string(data_.size()) +
                        " elements does not match shape " + shape.str());
  }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape.size() != shape_.size()) {
    throw ShapeMismatch("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
void Tensor<T>::add_(const Tensor& other) {
  if (!(other.shape_ == shape_)) {
    throw ShapeMismatch("add_: " + shape_.str() + " vs " + other.shape_.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace facefuse::nn

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dmrn/error.hpp"

namespace dmrn {

using Shape = std::vector<std::size_t>;

/// Number of elements described by a shape. The empty shape is a scalar.
std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array. Image batches use N,C,H,W.
///
/// The gradient buffer is allocated on demand and always has the same
/// shape as the data.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{}, value); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Element of a rank-4 tensor.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  /// Scalar value; the tensor must hold exactly one element.
  T item() const;

  bool has_grad() const noexcept { return !grad_.empty(); }
  void ensure_grad();
  void zero_grad();
  void drop_grad() noexcept { grad_.clear(); grad_.shrink_to_fit(); }
  std::span<T> grad() noexcept { return grad_; }
  std::span<const T> grad() const noexcept { return grad_; }

  /// Reinterpret the buffer under a new shape with the same element count.
  void reshape(Shape shape);

  /// Same values, other element type. The gradient is not copied.
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace dmrn

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace manograph {

#ifdef MANOGRAPH_SINGLE_PRECISION
using Scalar = float;
#else
using Scalar = double;
#endif

/// Dense row-major tensor of Scalar. Tensors are plain values: copies are
/// deep, there is no view aliasing, and every operation producing a tensor
/// returns a fresh one.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<Scalar> data);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, Scalar value);
  // 1-D tensor from explicit values.
  static Tensor vector(std::vector<Scalar> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<Scalar> data);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  // Rows/cols of a 2-D tensor.
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::vector<Scalar>& values() { return data_; }
  const std::vector<Scalar>& values() const { return data_; }

  Scalar& operator[](std::size_t flat) { return data_[flat]; }
  Scalar operator[](std::size_t flat) const { return data_[flat]; }
  Scalar& operator()(std::size_t i);
  Scalar operator()(std::size_t i) const;
  Scalar& operator()(std::size_t i, std::size_t j);
  Scalar operator()(std::size_t i, std::size_t j) const;
  Scalar& operator()(std::size_t i, std::size_t j, std::size_t k);
  Scalar operator()(std::size_t i, std::size_t j, std::size_t k) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  // Same shape and bit-identical payload.
  bool bit_equal(const Tensor& other) const;

  // Returns a copy with a new shape of equal element count.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<Scalar> data_;
};

// Throws std::invalid_argument with `msg` when `cond` is false.
void check(bool cond, const std::string& msg);
// Throws std::invalid_argument unless both tensors have identical shapes.
void check_same_shape(const Tensor& a, const Tensor& b, const std::string& what);

std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace manograph

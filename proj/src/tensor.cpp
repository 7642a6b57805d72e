#include "manograph/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace manograph {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), Scalar(0)) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<Scalar> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check(shape_product(shape_) == data_.size(),
        "tensor data length " + std::to_string(data_.size()) +
            " does not match shape " + shape_to_string(shape_));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, Scalar value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::vector(std::vector<Scalar> values) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<Scalar> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = Scalar(1);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  check(axis < shape_.size(), "axis " + std::to_string(axis) + " out of range for " + shape_str());
  return shape_[axis];
}

Scalar& Tensor::operator()(std::size_t i) { return data_[i]; }
Scalar Tensor::operator()(std::size_t i) const { return data_[i]; }

Scalar& Tensor::operator()(std::size_t i, std::size_t j) {
  return data_[i * shape_[1] + j];
}
Scalar Tensor::operator()(std::size_t i, std::size_t j) const {
  return data_[i * shape_[1] + j];
}

Scalar& Tensor::operator()(std::size_t i, std::size_t j, std::size_t k) {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}
Scalar Tensor::operator()(std::size_t i, std::size_t j, std::size_t k) const {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}

bool Tensor::all_finite() const {
  for (Scalar v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  if (data_.empty()) return other.data_.empty();
  return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(Scalar)) == 0;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  check(shape_product(shape) == data_.size(),
        "cannot reshape " + shape_str() + " to " + shape_to_string(shape));
  return Tensor(std::move(shape), data_);
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
  check(a.same_shape(b), what + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

}  // namespace manograph

#include "manograph/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace manograph {

namespace {

using EMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap as_mat(const Tensor& t) {
  check(t.ndim() == 2, "expected 2-D tensor, got " + t.shape_str());
  return ECMap(t.data(), static_cast<Eigen::Index>(t.rows()),
               static_cast<Eigen::Index>(t.cols()));
}

EMap as_mat(Tensor& t) {
  check(t.ndim() == 2, "expected 2-D tensor, got " + t.shape_str());
  return EMap(t.data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2 && a.cols() == b.rows(),
        "matmul: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
  Tensor out({a.rows(), b.cols()});
  as_mat(out).noalias() = as_mat(a) * as_mat(b);
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2 && a.rows() == b.rows(),
        "matmul_tn: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
  Tensor out({a.cols(), b.cols()});
  as_mat(out).noalias() = as_mat(a).transpose() * as_mat(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2 && a.cols() == b.cols(),
        "matmul_nt: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
  Tensor out({a.rows(), b.rows()});
  as_mat(out).noalias() = as_mat(a) * as_mat(b).transpose();
  return out;
}

Tensor transposed(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  as_mat(out) = as_mat(a).transpose();
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scaled(const Tensor& a, Scalar s) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void axpy_inplace(Tensor& a, Scalar s, const Tensor& b) {
  check_same_shape(a, b, "axpy_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

Scalar sum(const Tensor& a) {
  Scalar s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

Scalar dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  Scalar s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Tensor add_row_broadcast(const Tensor& a, const Tensor& row) {
  check(a.ndim() == 2 && row.ndim() == 1 && row.size() == a.cols(),
        "add_row_broadcast: shapes " + a.shape_str() + " and " + row.shape_str());
  Tensor out = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += row[j];
  return out;
}

Tensor col_sums(const Tensor& a) {
  check(a.ndim() == 2, "col_sums: expected 2-D tensor");
  Tensor out({a.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j);
  return out;
}

Tensor activate(const Tensor& pre, Activation act) {
  if (act == Activation::kIdentity) return pre;
  Tensor out = pre;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > Scalar(0) ? out[i] : Scalar(0);
  return out;
}

Tensor activate_backward(const Tensor& pre, const Tensor& grad_out, Activation act) {
  if (act == Activation::kIdentity) return grad_out;
  check_same_shape(pre, grad_out, "activate_backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (pre[i] <= Scalar(0)) g[i] = Scalar(0);
  return g;
}

Tensor softmax_rows(const Tensor& x, const Tensor* mask) {
  check(x.ndim() == 2, "softmax_rows: expected 2-D tensor, got " + x.shape_str());
  check(x.all_finite(), "softmax_rows: non-finite input");
  if (mask) check_same_shape(x, *mask, "softmax_rows mask");
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    Scalar row_max = -std::numeric_limits<Scalar>::infinity();
    std::size_t kept = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (mask && (*mask)(i, j) == Scalar(0)) continue;
      ++kept;
      if (x(i, j) > row_max) row_max = x(i, j);
    }
    if (kept == 0)
      throw std::invalid_argument("softmax_rows: row " + std::to_string(i) +
                                  " is fully masked");
    Scalar denom = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (mask && (*mask)(i, j) == Scalar(0)) continue;
      const Scalar e = std::exp(x(i, j) - row_max);
      out(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < m; ++j) out(i, j) /= denom;
    if (mask)
      for (std::size_t j = 0; j < m; ++j)
        if ((*mask)(i, j) == Scalar(0)) out(i, j) = Scalar(0);
  }
  return out;
}

Tensor softmax_rows_backward(const Tensor& soft, const Tensor& grad_out) {
  check_same_shape(soft, grad_out, "softmax_rows_backward");
  const std::size_t n = soft.rows(), m = soft.cols();
  Tensor g({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    Scalar inner = 0;
    for (std::size_t j = 0; j < m; ++j) inner += soft(i, j) * grad_out(i, j);
    for (std::size_t j = 0; j < m; ++j)
      g(i, j) = soft(i, j) * (grad_out(i, j) - inner);
  }
  return g;
}

Tensor xavier_init(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  check(fan_in >= 1 && fan_out >= 1, "xavier_init: fans must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return rng.uniform_tensor({fan_in, fan_out}, -bound, bound);
}

}  // namespace manograph

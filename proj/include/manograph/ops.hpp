#pragma once

#include <optional>

#include "manograph/rng.hpp"
#include "manograph/tensor.hpp"

namespace manograph {

// ---- dense matrix primitives (2-D tensors, Eigen-backed) ----

// a(m,k) * b(k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);
// a(k,m)^T * b(k,n) -> (m,n)
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a(m,k) * b(n,k)^T -> (m,n)
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transposed(const Tensor& a);

// ---- elementwise helpers ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, Scalar s);
void add_inplace(Tensor& a, const Tensor& b);
void axpy_inplace(Tensor& a, Scalar s, const Tensor& b);  // a += s * b
Scalar sum(const Tensor& a);
Scalar dot(const Tensor& a, const Tensor& b);

// Adds `row` (1-D of length cols) to every row of `a`.
Tensor add_row_broadcast(const Tensor& a, const Tensor& row);
// Column sums of a 2-D tensor -> 1-D of length cols.
Tensor col_sums(const Tensor& a);

// ---- activations ----

enum class Activation { kIdentity, kRelu };

Tensor activate(const Tensor& pre, Activation act);
// dL/dpre from dL/dout given the pre-activation values.
Tensor activate_backward(const Tensor& pre, const Tensor& grad_out, Activation act);

// ---- softmax ----

// Row-wise softmax of a 2-D tensor, numerically stabilized by subtracting
// each row's max. With a mask (same shape, nonzero = keep) the softmax is
// taken over the kept entries only and masked-out entries are exactly 0.
// A row with no kept entry is an error naming the row.
Tensor softmax_rows(const Tensor& x, const Tensor* mask = nullptr);

// dL/dlogits from dL/dsoftmax for a row-wise softmax with output `soft`.
// Masked-out entries (soft == 0 under the mask) receive zero gradient.
Tensor softmax_rows_backward(const Tensor& soft, const Tensor& grad_out);

// ---- initialization ----

// Uniform Glorot: entries in +-sqrt(6 / (fan_in + fan_out)), deterministic
// for a given rng state.
Tensor xavier_init(Rng& rng, std::size_t fan_in, std::size_t fan_out);

}  // namespace manograph

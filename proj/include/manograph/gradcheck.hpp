#pragma once

#include <functional>

#include "manograph/tensor.hpp"

namespace manograph {

struct GradCheckReport {
  Scalar max_rel_error = 0;
  std::size_t worst_index = 0;
  Scalar analytic = 0;  // analytic derivative at the worst coordinate
  Scalar numeric = 0;   // central-difference estimate at the worst coordinate
};

using ScalarFn = std::function<Scalar(const Tensor&)>;
using GradFn = std::function<Tensor(const Tensor&)>;

/// Central-difference gradient check of a scalar-valued function. Probes
/// every coordinate of x with +-eps, compares against the analytic gradient,
/// and reports the worst relative error with denominator
/// max(|analytic|, |numeric|, 1e-8). A non-finite function value during
/// probing is an error naming the coordinate.
GradCheckReport finite_diff_grad_check(const ScalarFn& f, const GradFn& analytic_grad,
                                       const Tensor& x, Scalar eps = Scalar(1e-5));

/// Variant with the analytic gradient already evaluated at x.
GradCheckReport finite_diff_grad_check(const ScalarFn& f, const Tensor& analytic_grad_at_x,
                                       const Tensor& x, Scalar eps = Scalar(1e-5));

}  // namespace manograph

#include "manograph/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace manograph {

GradCheckReport finite_diff_grad_check(const ScalarFn& f, const Tensor& analytic_grad_at_x,
                                       const Tensor& x, Scalar eps) {
  check(eps > Scalar(0), "finite_diff_grad_check: eps must be positive");
  check_same_shape(analytic_grad_at_x, x, "finite_diff_grad_check gradient");
  GradCheckReport report;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Scalar saved = probe[i];
    probe[i] = saved + eps;
    const Scalar f_plus = f(probe);
    probe[i] = saved - eps;
    const Scalar f_minus = f(probe);
    probe[i] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
      throw std::runtime_error("finite_diff_grad_check: non-finite value while probing coordinate " +
                               std::to_string(i));
    const Scalar numeric = (f_plus - f_minus) / (2 * eps);
    const Scalar analytic = analytic_grad_at_x[i];
    const Scalar denom =
        std::max({std::abs(analytic), std::abs(numeric), Scalar(1e-8)});
    const Scalar rel = std::abs(analytic - numeric) / denom;
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic = analytic;
      report.numeric = numeric;
    }
  }
  return report;
}

GradCheckReport finite_diff_grad_check(const ScalarFn& f, const GradFn& analytic_grad,
                                       const Tensor& x, Scalar eps) {
  return finite_diff_grad_check(f, analytic_grad(x), x, eps);
}

}  // namespace manograph

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "manograph/gradcheck.hpp"

namespace manograph {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

/// Finite-difference checks of every differentiable operation at toy sizes:
/// rodrigues, mano_forward, semgconv, gconv, soft_argmax, cross_attention,
/// fuse, a full refiner block, refine_forward, and all loss terms. All cases
/// are expected under 1e-5 relative error in double precision.
std::vector<GradCheckCase> gradient_check_suite();

// Varies *target in place around its current value, restoring it afterwards.
GradCheckReport finite_diff_against(Tensor* target, const std::function<Scalar()>& forward,
                                    const Tensor& analytic, Scalar eps = Scalar(1e-5));

}  // namespace manograph

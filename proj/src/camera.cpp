#include "manograph/camera.hpp"

namespace manograph {

Tensor project_weak_perspective(const Tensor& points, Scalar scale,
                                const std::array<Scalar, 2>& translation) {
  check(scale > Scalar(0), "project_weak_perspective: scale must be positive");
  check(points.ndim() == 2 && points.cols() == 3,
        "project_weak_perspective: expected (n, 3) points");
  Tensor out({points.rows(), 2});
  for (std::size_t i = 0; i < points.rows(); ++i) {
    out(i, 0) = scale * points(i, 0) + translation[0];
    out(i, 1) = scale * points(i, 1) + translation[1];
  }
  return out;
}

}  // namespace manograph

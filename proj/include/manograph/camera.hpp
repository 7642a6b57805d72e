#pragma once

#include <array>

#include "manograph/tensor.hpp"

namespace manograph {

/// Orthographic drop of Z followed by isotropic 2D scale and translation.
struct WeakPerspectiveCamera {
  Scalar scale = 1;
  std::array<Scalar, 2> translation{0, 0};
};

// (x, y) = scale * (X, Y) + translation; errors on scale <= 0.
Tensor project_weak_perspective(const Tensor& points, Scalar scale,
                                const std::array<Scalar, 2>& translation);

inline Tensor project_weak_perspective(const Tensor& points,
                                       const WeakPerspectiveCamera& camera) {
  return project_weak_perspective(points, camera.scale, camera.translation);
}

}  // namespace manograph

#pragma once

#include <vector>

#include "manograph/archive.hpp"
#include "manograph/camera.hpp"
#include "manograph/mano.hpp"
#include "manograph/regressor.hpp"
#include "manograph/rng.hpp"

namespace manograph {

/// One fully-supervised synthetic sample. Ground-truth geometry comes from
/// the model itself; the global feature is a seeded stand-in for the
/// (out-of-process) image backbone.
struct SyntheticSample {
  PoseParams theta_gt;
  ShapeParams beta_gt;
  HandMesh mesh_gt;
  Joints3D joints3d_gt;
  WeakPerspectiveCamera camera;
  Joints2D joints2d_gt;   // exactly project(joints3d_gt)
  Heatmaps heatmaps_gt;   // unnormalized Gaussians, argmax within 1 px
  Tensor f_global;        // (2048)
};

struct SynthOptions {
  std::size_t heatmap_size = 32;
  Scalar heatmap_sigma_px = 1.5;
  Scalar theta_range = 0.5;  // theta ~ U[-range, range] per component
  Scalar beta_range = 2.0;   // beta ~ U[-range, range]
};

// G[r][c] = exp(-((c+0.5 - x*w)^2 + (r+0.5 - y*h)^2) / (2 sigma^2))
Heatmaps render_heatmaps(const Joints2D& joints2d, std::size_t h, std::size_t w,
                         Scalar sigma_px);

// Deterministic given the rng seed; the camera is fitted per sample so the
// projected joints land inside the unit image.
std::vector<SyntheticSample> synth_dataset(Rng& rng, std::size_t n, const ManoModel& model,
                                           const SynthOptions& options = {});

Archive dataset_to_archive(const std::vector<SyntheticSample>& samples);
std::vector<SyntheticSample> dataset_from_archive(const Archive& archive);

}  // namespace manograph

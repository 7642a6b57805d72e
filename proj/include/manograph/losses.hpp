#pragma once

#include <array>
#include <vector>

#include "manograph/mano.hpp"
#include "manograph/tensor.hpp"

namespace manograph {

// L2 terms over coordinate-like tensors use the mean of squared Euclidean
// row distances; beta and heatmap terms use the plain per-element mean of
// squared differences. Means keep the loss weights scale-free across tensor
// sizes.

Scalar mean_sq_row_distance(const Tensor& pred, const Tensor& gt);
Tensor mean_sq_row_distance_backward(const Tensor& pred, const Tensor& gt, Scalar upstream);
Scalar mean_sq_error(const Tensor& pred, const Tensor& gt);
Tensor mean_sq_error_backward(const Tensor& pred, const Tensor& gt, Scalar upstream);

struct LossWeights {
  Scalar lambda1 = 1;    // initial-stage (MANO) loss
  Scalar lambda2 = 1;    // refinement loss
  Scalar lambda3 = 1;    // edge loss
  Scalar lambda4 = 0.1;  // normal loss (unit-vector terms are O(1))
  void validate() const;
};

struct LossReport {
  Scalar l_mano = 0;
  Scalar l_r = 0;
  Scalar l_e = 0;
  Scalar l_n = 0;
  Scalar total = 0;
};

// ---- initial-stage loss ----

/// Tensors of one initial-stage prediction (or its ground truth). Terms are
/// selected by ManoLossFlags; a term may be absent when unsupervised.
struct ManoQuantities {
  Tensor vertices;  // (V, 3)
  Tensor joints;    // (21, 3)
  Tensor theta;     // (K, 3)
  Tensor beta;      // (10)
  Tensor heatmaps;  // (J, h, w)
  Tensor joints2d;  // (J, 2)
};

struct ManoLossFlags {
  bool vertices = true;
  bool joints = true;
  bool theta = true;
  bool beta = true;
  bool heatmaps = true;
  bool joints2d = true;
};

struct ManoLossBreakdown {
  Scalar vertices = 0, joints = 0, theta = 0, beta = 0, heatmaps = 0, joints2d = 0;
  ManoLossFlags active;  // which terms contributed; the rest were skipped
  Scalar total = 0;
};

ManoLossBreakdown mano_loss(const ManoQuantities& pred, const ManoQuantities& gt,
                            const ManoLossFlags& flags = {});
// Per-term gradients w.r.t. the predictions; skipped terms get empty tensors.
ManoQuantities mano_loss_backward(const ManoQuantities& pred, const ManoQuantities& gt,
                                  const ManoLossFlags& flags, Scalar upstream);

// ---- refinement loss ----

Scalar refinement_loss(const HandMesh& v_tilde, const Joints3D& j_tilde, const HandMesh& gt_mesh,
                       const Joints3D& gt_joints);
void refinement_loss_backward(const HandMesh& v_tilde, const Joints3D& j_tilde,
                              const HandMesh& gt_mesh, const Joints3D& gt_joints,
                              Scalar upstream, Tensor* grad_vertices, Tensor* grad_joints);

// ---- mesh regularizers ----

struct MeshLossResult {
  Scalar value = 0;
  std::size_t skipped = 0;  // degenerate ground-truth elements excluded
};

// Mean over unique mesh edges of | |pred edge| - |gt edge| |. Zero-length
// ground-truth edges are excluded and counted.
MeshLossResult edge_loss(const HandMesh& pred, const HandMesh& gt,
                         const std::vector<std::array<int, 3>>& faces);
Tensor edge_loss_backward(const HandMesh& pred, const HandMesh& gt,
                          const std::vector<std::array<int, 3>>& faces, Scalar upstream);

// Mean over face-edge pairs of |<unit pred edge, unit gt face normal>|.
// Degenerate ground-truth faces (and zero-length predicted edges) are
// excluded and counted.
MeshLossResult normal_loss(const HandMesh& pred, const HandMesh& gt,
                           const std::vector<std::array<int, 3>>& faces);
Tensor normal_loss_backward(const HandMesh& pred, const HandMesh& gt,
                            const std::vector<std::array<int, 3>>& faces, Scalar upstream);

// ---- total ----

LossReport total_loss(const LossWeights& weights, Scalar l_mano, Scalar l_r, Scalar l_e,
                      Scalar l_n);

}  // namespace manograph

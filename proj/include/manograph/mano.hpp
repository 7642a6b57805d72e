#pragma once

#include <array>
#include <vector>

#include "manograph/rng.hpp"
#include "manograph/tensor.hpp"

namespace manograph {

/// Rest-state tensors of the parametric hand model. Immutable after load.
///
/// Joint ordering is the model's own: joint 0 is the wrist/root and every
/// parent precedes its children. Fingertip ids are mesh vertex indices in
/// thumb -> pinky order.
struct ManoModel {
  Tensor template_verts;   // (V, 3), meters
  Tensor shape_basis;      // (10, V, 3)
  Tensor pose_basis;       // (9*(K-1), V, 3)
  Tensor joint_regressor;  // (K, V), rows sum to 1
  Tensor skin_weights;     // (V, K), rows sum to 1, non-negative
  std::vector<int> parents;               // length K, parents[0] == -1
  std::vector<std::array<int, 3>> faces;  // (F, 3) vertex indices
  std::vector<int> fingertip_ids;         // 5 vertex indices

  std::size_t num_vertices() const { return template_verts.rows(); }
  std::size_t num_joints() const { return parents.size(); }
  std::size_t num_shape_coeffs() const { return shape_basis.dim(0); }

  // Joints with no children, in index order. Fingertip nodes of the joint
  // graph attach here.
  std::vector<int> leaf_joints() const;

  // Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

struct PoseParams {
  Tensor theta;  // (K, 3) axis-angle, radians
};

struct ShapeParams {
  Tensor beta;  // (10)
};

struct HandMesh {
  Tensor vertices;  // (V, 3), meters
};

struct Joints3D {
  Tensor joints;  // (K + 5, 3): articulated joints then fingertips
};

/// Per-joint rigid transforms, stored structure-of-arrays.
struct RigidTransforms {
  Tensor rotations;     // (K, 3, 3)
  Tensor translations;  // (K, 3)
  std::size_t count() const { return translations.rows(); }
};

// ---- Rodrigues ----

// Axis-angle (3) to rotation matrix (3, 3). Angle = |axis_angle|; below
// 1e-8 a Taylor branch removes the 0/0.
Tensor rodrigues(const Tensor& axis_angle);
// dL/d(axis_angle) from dL/dR.
Tensor rodrigues_backward(const Tensor& axis_angle, const Tensor& grad_rotation);

// ---- blend shapes and joints ----

// Sum_i beta_i * shape_basis[i] -> (V, 3)
Tensor shape_blend(const ManoModel& model, const ShapeParams& beta);
// Pose basis contracted with vec(R(theta_k) - I) over non-root joints -> (V, 3)
Tensor pose_blend(const ManoModel& model, const PoseParams& theta);
// joint_regressor * (template + shape offsets) -> (K, 3)
Tensor rest_joints(const ManoModel& model, const ShapeParams& beta);

// ---- kinematics and skinning ----

struct FkResult {
  RigidTransforms global;  // world-frame transform per joint
  Tensor posed_joints;     // (K, 3) == global translations
};

// Composes local rotations down the tree. Local rotation of joint k acts
// about its rest position; the root translation equals rest[0].
FkResult forward_kinematics(const Tensor& theta, const Tensor& rest,
                            const std::vector<int>& parents);

// Converts world-frame transforms to rest-relative skinning transforms:
// x -> R x + (t - R rest_k).
RigidTransforms skinning_transforms(const RigidTransforms& global, const Tensor& rest);

// Blends rest-relative transforms per vertex with the model's skin weights.
HandMesh lbs(const ManoModel& model, const RigidTransforms& rest_relative,
             const Tensor& shaped_posed_template);

// ---- full model ----

struct ManoOutput {
  HandMesh mesh;
  Tensor joints;  // (K, 3) posed articulated joints
};

/// Saved intermediates of mano_forward, consumed by mano_backward.
struct ManoCache {
  Tensor theta;            // (K, 3)
  Tensor shaped;           // (V, 3) template + shape offsets
  Tensor shaped_posed;     // (V, 3) shaped + pose offsets
  Tensor rest;             // (K, 3)
  Tensor local_rotations;  // (K, 3, 3) R(theta_k)
  RigidTransforms global;
  RigidTransforms rest_relative;
};

ManoOutput mano_forward(const ManoModel& model, const PoseParams& pose,
                        const ShapeParams& shape, ManoCache* cache = nullptr);

struct ManoGrads {
  Tensor theta;  // (K, 3)
  Tensor beta;   // (10)
};

// Reverse-mode pass through LBS, kinematics and both blend shapes.
// grad_vertices is (V, 3); grad_joints is (K, 3) over the posed articulated
// joints (pass zeros when only the mesh is supervised).
ManoGrads mano_backward(const ManoModel& model, const ManoCache& cache,
                        const Tensor& grad_vertices, const Tensor& grad_joints);

// ---- joint set augmentation ----

// 16 articulated joints ++ 5 fingertip vertices (thumb -> pinky), giving the
// 21-joint set; generalizes to K + 5 for toy models.
Joints3D joints_to_21(const Tensor& posed_joints, const HandMesh& mesh,
                      const std::vector<int>& fingertip_ids);

struct Joints21Grads {
  Tensor posed_joints;  // (K, 3)
  Tensor vertices;      // (V, 3), nonzero only at fingertip rows
};

Joints21Grads joints_to_21_backward(const Tensor& grad_joints21, std::size_t num_joints,
                                    std::size_t num_vertices,
                                    const std::vector<int>& fingertip_ids);

// ---- synthetic models ----

// Random valid model at the requested size: normalized regressor and skin
// weights, random rooted tree, triangle-strip faces. Real MANO weights are
// licensed separately and are only ever ingested through the archive format.
ManoModel make_toy_model(Rng& rng, std::size_t num_vertices, std::size_t num_joints);

}  // namespace manograph

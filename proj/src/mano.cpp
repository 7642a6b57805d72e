#include "manograph/mano.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>

#include "manograph/ops.hpp"

namespace manograph {

namespace {

using Mat3 = Eigen::Matrix<Scalar, 3, 3, Eigen::RowMajor>;
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

Mat3 skew(const Vec3& w) {
  Mat3 k;
  k << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return k;
}

Vec3 row3(const Tensor& t, std::size_t i) {
  return Vec3(t(i, 0), t(i, 1), t(i, 2));
}

void set_row3(Tensor& t, std::size_t i, const Vec3& v) {
  t(i, 0) = v.x();
  t(i, 1) = v.y();
  t(i, 2) = v.z();
}

Mat3 mat3_at(const Tensor& t, std::size_t k) {
  Mat3 m;
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) m(p, q) = t(k, p, q);
  return m;
}

void set_mat3(Tensor& t, std::size_t k, const Mat3& m) {
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) t(k, p, q) = m(p, q);
}

// sin(t)/t and (1-cos(t))/t^2 with the small-angle Taylor branch.
void rodrigues_coeffs(Scalar theta, Scalar* a, Scalar* b) {
  if (theta < Scalar(1e-8)) {
    const Scalar t2 = theta * theta;
    *a = Scalar(1) - t2 / Scalar(6);
    *b = Scalar(0.5) - t2 / Scalar(24);
  } else {
    *a = std::sin(theta) / theta;
    *b = (Scalar(1) - std::cos(theta)) / (theta * theta);
  }
}

// a'(t)/t and b'(t)/t; the direct expressions cancel catastrophically near
// zero, so below 1e-4 a three-term series keeps full precision.
void rodrigues_coeff_rates(Scalar theta, Scalar* ra, Scalar* rb) {
  const Scalar t2 = theta * theta;
  if (theta < Scalar(1e-4)) {
    *ra = -Scalar(1) / 3 + t2 / 30 - t2 * t2 / 840;
    *rb = -Scalar(1) / 12 + t2 / 180 - t2 * t2 / 6720;
  } else {
    const Scalar s = std::sin(theta), c = std::cos(theta);
    *ra = (theta * c - s) / (t2 * theta);
    *rb = (theta * s - 2 * (Scalar(1) - c)) / (t2 * t2);
  }
}

Mat3 rodrigues_mat(const Vec3& w) {
  Scalar a, b;
  rodrigues_coeffs(w.norm(), &a, &b);
  const Mat3 k = skew(w);
  return Mat3::Identity() + a * k + b * (k * k);
}

Vec3 rodrigues_grad(const Vec3& w, const Mat3& g) {
  Scalar a, b, ra, rb;
  const Scalar theta = w.norm();
  rodrigues_coeffs(theta, &a, &b);
  rodrigues_coeff_rates(theta, &ra, &rb);
  const Mat3 k = skew(w);
  const Mat3 k2 = k * k;
  const Scalar gk = g.cwiseProduct(k).sum();
  const Scalar gk2 = g.cwiseProduct(k2).sum();
  Vec3 grad;
  for (int i = 0; i < 3; ++i) {
    Vec3 e = Vec3::Zero();
    e(i) = 1;
    const Mat3 ei = skew(e);
    const Scalar g_ei = g.cwiseProduct(ei).sum();
    const Scalar g_mix = g.cwiseProduct(ei * k + k * ei).sum();
    grad(i) = ra * w(i) * gk + a * g_ei + rb * w(i) * gk2 + b * g_mix;
  }
  return grad;
}

// Flattened pose feature vec(R_k - I) over non-root joints.
Tensor pose_feature_from_rotations(const Tensor& local_rotations) {
  const std::size_t k = local_rotations.dim(0);
  Tensor f({9 * (k - 1)});
  for (std::size_t j = 1; j < k; ++j)
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q)
        f[(j - 1) * 9 + p * 3 + q] =
            local_rotations(j, p, q) - (p == q ? Scalar(1) : Scalar(0));
  return f;
}

// offsets(V,3) = sum_m f_m * basis[m]
Tensor contract_basis(const Tensor& basis, const Tensor& coeffs) {
  const std::size_t m = basis.dim(0);
  const std::size_t v = basis.dim(1);
  check(coeffs.size() == m, "basis contraction: expected " + std::to_string(m) +
                                " coefficients, got " + std::to_string(coeffs.size()));
  Tensor out({v, 3});
  for (std::size_t i = 0; i < m; ++i) {
    const Scalar c = coeffs[i];
    if (c == Scalar(0)) continue;
    const Scalar* slice = basis.data() + i * v * 3;
    for (std::size_t e = 0; e < v * 3; ++e) out[e] += c * slice[e];
  }
  return out;
}

// dL/dcoeffs of contract_basis.
Tensor contract_basis_backward(const Tensor& basis, const Tensor& grad_offsets) {
  const std::size_t m = basis.dim(0);
  const std::size_t v = basis.dim(1);
  Tensor grad({m});
  for (std::size_t i = 0; i < m; ++i) {
    const Scalar* slice = basis.data() + i * v * 3;
    Scalar acc = 0;
    for (std::size_t e = 0; e < v * 3; ++e) acc += slice[e] * grad_offsets[e];
    grad[i] = acc;
  }
  return grad;
}

Tensor compute_local_rotations(const Tensor& theta) {
  const std::size_t k = theta.rows();
  Tensor rot({k, 3, 3});
  for (std::size_t j = 0; j < k; ++j) set_mat3(rot, j, rodrigues_mat(row3(theta, j)));
  return rot;
}

// Global translations are tracked as rest position plus deviation. The
// deviation recursion d_k = (Rg_parent - I)(rest_k - rest_parent) + d_parent
// is exactly zero at the rest pose, which keeps the theta = 0 identities
// bit-exact instead of within an ulp.
FkResult fk_from_rotations(const Tensor& local_rotations, const Tensor& rest,
                           const std::vector<int>& parents) {
  const std::size_t k = parents.size();
  RigidTransforms global{Tensor({k, 3, 3}), Tensor({k, 3})};
  std::vector<Vec3> deviation(k);
  for (std::size_t j = 0; j < k; ++j) {
    const Mat3 rl = mat3_at(local_rotations, j);
    if (j == 0) {
      set_mat3(global.rotations, 0, rl);
      deviation[0] = Vec3::Zero();
      set_row3(global.translations, 0, row3(rest, 0));
    } else {
      const int p = parents[j];
      const Mat3 rp = mat3_at(global.rotations, p);
      const Vec3 offset = row3(rest, j) - row3(rest, p);
      set_mat3(global.rotations, j, Mat3(rp * rl));
      deviation[j] = (rp - Mat3::Identity()) * offset + deviation[p];
      set_row3(global.translations, j, Vec3(row3(rest, j) + deviation[j]));
    }
  }
  return FkResult{global, global.translations};
}

}  // namespace

std::vector<int> ManoModel::leaf_joints() const {
  std::vector<char> has_child(parents.size(), 0);
  for (std::size_t j = 1; j < parents.size(); ++j) has_child[parents[j]] = 1;
  std::vector<int> leaves;
  for (std::size_t j = 0; j < parents.size(); ++j)
    if (!has_child[j]) leaves.push_back(static_cast<int>(j));
  return leaves;
}

void ManoModel::validate() const {
  const std::size_t v = num_vertices();
  const std::size_t k = num_joints();
  check(v >= 2 && k >= 1, "model must have >= 2 vertices and >= 1 joint");
  check(template_verts.ndim() == 2 && template_verts.cols() == 3, "template must be (V, 3)");
  check(shape_basis.ndim() == 3 && shape_basis.dim(1) == v && shape_basis.dim(2) == 3,
        "shape basis must be (S, V, 3)");
  check(k == 1 || (pose_basis.ndim() == 3 && pose_basis.dim(0) == 9 * (k - 1) &&
                   pose_basis.dim(1) == v && pose_basis.dim(2) == 3),
        "pose basis must be (9*(K-1), V, 3)");
  check(joint_regressor.ndim() == 2 && joint_regressor.rows() == k &&
            joint_regressor.cols() == v,
        "joint regressor must be (K, V)");
  check(skin_weights.ndim() == 2 && skin_weights.rows() == v && skin_weights.cols() == k,
        "skin weights must be (V, K)");
  check(parents[0] == -1, "parents[0] must be -1");
  for (std::size_t j = 1; j < k; ++j)
    check(parents[j] >= 0 && static_cast<std::size_t>(parents[j]) < j,
          "parents must form a rooted tree with parents before children; joint " +
              std::to_string(j) + " has parent " + std::to_string(parents[j]));
  const Scalar tol = Scalar(1e-9);
  for (std::size_t r = 0; r < v; ++r) {
    Scalar s = 0;
    for (std::size_t c = 0; c < k; ++c) {
      check(skin_weights(r, c) >= Scalar(0), "skin weights must be non-negative");
      s += skin_weights(r, c);
    }
    check(std::abs(s - Scalar(1)) < tol,
          "skin weight row " + std::to_string(r) + " sums to " + std::to_string(s));
  }
  for (std::size_t r = 0; r < k; ++r) {
    Scalar s = 0;
    for (std::size_t c = 0; c < v; ++c) s += joint_regressor(r, c);
    check(std::abs(s - Scalar(1)) < tol,
          "joint regressor row " + std::to_string(r) + " sums to " + std::to_string(s));
  }
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (int c = 0; c < 3; ++c)
      check(faces[f][c] >= 0 && static_cast<std::size_t>(faces[f][c]) < v,
            "face " + std::to_string(f) + " index out of range");
  check(fingertip_ids.size() == 5, "expected 5 fingertip ids");
  for (int id : fingertip_ids)
    check(id >= 0 && static_cast<std::size_t>(id) < v, "fingertip id out of range");
}

Tensor rodrigues(const Tensor& axis_angle) {
  check(axis_angle.size() == 3, "rodrigues: expected a 3-vector");
  check(axis_angle.all_finite(), "rodrigues: non-finite input");
  const Mat3 r = rodrigues_mat(Vec3(axis_angle[0], axis_angle[1], axis_angle[2]));
  Tensor out({3, 3});
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) out(p, q) = r(p, q);
  return out;
}

Tensor rodrigues_backward(const Tensor& axis_angle, const Tensor& grad_rotation) {
  check(axis_angle.size() == 3 && grad_rotation.size() == 9,
        "rodrigues_backward: expected shapes (3) and (3, 3)");
  Mat3 g;
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) g(p, q) = grad_rotation[p * 3 + q];
  const Vec3 grad =
      rodrigues_grad(Vec3(axis_angle[0], axis_angle[1], axis_angle[2]), g);
  return Tensor::vector({grad.x(), grad.y(), grad.z()});
}

Tensor shape_blend(const ManoModel& model, const ShapeParams& shape) {
  check(shape.beta.size() == model.num_shape_coeffs(),
        "shape_blend: beta length " + std::to_string(shape.beta.size()) + ", expected " +
            std::to_string(model.num_shape_coeffs()));
  return contract_basis(model.shape_basis, shape.beta);
}

Tensor pose_blend(const ManoModel& model, const PoseParams& pose) {
  const std::size_t k = model.num_joints();
  check(pose.theta.ndim() == 2 && pose.theta.rows() == k && pose.theta.cols() == 3,
        "pose_blend: theta must be (K, 3)");
  if (k == 1) return Tensor({model.num_vertices(), 3});
  const Tensor rotations = compute_local_rotations(pose.theta);
  return contract_basis(model.pose_basis, pose_feature_from_rotations(rotations));
}

Tensor rest_joints(const ManoModel& model, const ShapeParams& shape) {
  Tensor shaped = add(model.template_verts, shape_blend(model, shape));
  return matmul(model.joint_regressor, shaped);
}

FkResult forward_kinematics(const Tensor& theta, const Tensor& rest,
                            const std::vector<int>& parents) {
  check(theta.ndim() == 2 && theta.rows() == parents.size() && theta.cols() == 3,
        "forward_kinematics: theta must be (K, 3)");
  check(rest.ndim() == 2 && rest.rows() == parents.size() && rest.cols() == 3,
        "forward_kinematics: rest must be (K, 3)");
  return fk_from_rotations(compute_local_rotations(theta), rest, parents);
}

RigidTransforms skinning_transforms(const RigidTransforms& global, const Tensor& rest) {
  const std::size_t k = global.count();
  RigidTransforms rel{global.rotations, Tensor({k, 3})};
  for (std::size_t j = 0; j < k; ++j) {
    const Mat3 r = mat3_at(global.rotations, j);
    const Vec3 rest_j = row3(rest, j);
    // (t - rest) + (rest - R rest): both terms vanish exactly at rest pose.
    const Vec3 t_rel =
        (row3(global.translations, j) - rest_j) + (rest_j - r * rest_j);
    set_row3(rel.translations, j, t_rel);
  }
  return rel;
}

HandMesh lbs(const ManoModel& model, const RigidTransforms& rest_relative,
             const Tensor& shaped_posed_template) {
  const std::size_t v = model.num_vertices();
  const std::size_t k = model.num_joints();
  check(rest_relative.count() == k, "lbs: transform count mismatch");
  check(shaped_posed_template.ndim() == 2 && shaped_posed_template.rows() == v &&
            shaped_posed_template.cols() == 3,
        "lbs: template must be (V, 3)");
  std::vector<Mat3> rot(k);
  std::vector<Vec3> trans(k);
  for (std::size_t j = 0; j < k; ++j) {
    rot[j] = mat3_at(rest_relative.rotations, j);
    trans[j] = row3(rest_relative.translations, j);
  }
  // Residual form: deviation matrices R - I and translations are exactly
  // zero for identity transforms, so lbs(identity) is the input bit-for-bit.
  std::vector<Mat3> dev(k);
  for (std::size_t j = 0; j < k; ++j) dev[j] = rot[j] - Mat3::Identity();
  Tensor out({v, 3});
  for (std::size_t i = 0; i < v; ++i) {
    const Vec3 y = row3(shaped_posed_template, i);
    Vec3 x = y;
    for (std::size_t j = 0; j < k; ++j) {
      const Scalar w = model.skin_weights(i, j);
      if (w == Scalar(0)) continue;
      x += w * (dev[j] * y + trans[j]);
    }
    set_row3(out, i, x);
  }
  return HandMesh{out};
}

ManoOutput mano_forward(const ManoModel& model, const PoseParams& pose,
                        const ShapeParams& shape, ManoCache* cache) {
  const std::size_t k = model.num_joints();
  check(pose.theta.ndim() == 2 && pose.theta.rows() == k && pose.theta.cols() == 3,
        "mano_forward: theta must be (K, 3)");
  check(pose.theta.all_finite() && shape.beta.all_finite(),
        "mano_forward: non-finite parameters");
  Tensor shaped = add(model.template_verts, shape_blend(model, shape));
  Tensor rest = matmul(model.joint_regressor, shaped);
  Tensor local_rotations = compute_local_rotations(pose.theta);
  Tensor shaped_posed = shaped;
  if (k > 1) {
    Tensor offsets =
        contract_basis(model.pose_basis, pose_feature_from_rotations(local_rotations));
    add_inplace(shaped_posed, offsets);
  }
  FkResult fk = fk_from_rotations(local_rotations, rest, model.parents);
  RigidTransforms rel = skinning_transforms(fk.global, rest);
  HandMesh mesh = lbs(model, rel, shaped_posed);
  if (cache) {
    cache->theta = pose.theta;
    cache->shaped = shaped;
    cache->shaped_posed = shaped_posed;
    cache->rest = rest;
    cache->local_rotations = local_rotations;
    cache->global = fk.global;
    cache->rest_relative = rel;
  }
  return ManoOutput{std::move(mesh), fk.posed_joints};
}

ManoGrads mano_backward(const ManoModel& model, const ManoCache& cache,
                        const Tensor& grad_vertices, const Tensor& grad_joints) {
  const std::size_t v = model.num_vertices();
  const std::size_t k = model.num_joints();
  check(grad_vertices.ndim() == 2 && grad_vertices.rows() == v,
        "mano_backward: grad_vertices must be (V, 3)");
  check(grad_joints.ndim() == 2 && grad_joints.rows() == k,
        "mano_backward: grad_joints must be (K, 3)");

  std::vector<Mat3> g_rot(k, Mat3::Zero());      // d/d global rotation
  std::vector<Vec3> g_trans(k, Vec3::Zero());    // d/d global translation
  std::vector<Vec3> g_trans_rel(k, Vec3::Zero());
  Tensor g_shaped_posed({v, 3});
  Tensor g_rest({k, 3});

  // LBS: x_i = sum_j w_ij (R'_j y_i + t'_j)
  for (std::size_t i = 0; i < v; ++i) {
    const Vec3 gx = row3(grad_vertices, i);
    const Vec3 y = row3(cache.shaped_posed, i);
    Vec3 gy = Vec3::Zero();
    for (std::size_t j = 0; j < k; ++j) {
      const Scalar w = model.skin_weights(i, j);
      if (w == Scalar(0)) continue;
      const Mat3 r = mat3_at(cache.rest_relative.rotations, j);
      gy += w * (r.transpose() * gx);
      g_rot[j] += (w * gx) * y.transpose();
      g_trans_rel[j] += w * gx;
    }
    set_row3(g_shaped_posed, i, gy);
  }

  // Rest-relative translation t' = t - R rest_j.
  for (std::size_t j = 0; j < k; ++j) {
    const Mat3 r = mat3_at(cache.global.rotations, j);
    const Vec3 rest_j = row3(cache.rest, j);
    g_trans[j] += g_trans_rel[j];
    g_rot[j] -= g_trans_rel[j] * rest_j.transpose();
    set_row3(g_rest, j, Vec3(row3(g_rest, j) - r.transpose() * g_trans_rel[j]));
  }

  // Posed joints are the global translations.
  for (std::size_t j = 0; j < k; ++j) g_trans[j] += row3(grad_joints, j);

  // Reverse kinematic chain; children come after parents, so iterate
  // backwards accumulating into parents.
  Tensor g_theta({k, 3});
  Tensor g_local_rot({k, 3, 3});
  for (std::size_t j = k; j-- > 1;) {
    const int p = model.parents[j];
    const Mat3 rl = mat3_at(cache.local_rotations, j);
    const Vec3 tl = row3(cache.rest, j) - row3(cache.rest, p);
    const Mat3 rp = mat3_at(cache.global.rotations, p);
    g_rot[p] += g_rot[j] * rl.transpose() + g_trans[j] * tl.transpose();
    g_trans[p] += g_trans[j];
    const Mat3 g_rl = rp.transpose() * g_rot[j];
    const Vec3 g_tl = rp.transpose() * g_trans[j];
    set_mat3(g_local_rot, j, g_rl);
    set_row3(g_rest, j, Vec3(row3(g_rest, j) + g_tl));
    set_row3(g_rest, p, Vec3(row3(g_rest, p) - g_tl));
  }
  set_mat3(g_local_rot, 0, g_rot[0]);
  set_row3(g_rest, 0, Vec3(row3(g_rest, 0) + g_trans[0]));

  // Pose blendshapes contribute to the local rotation gradients.
  if (k > 1) {
    Tensor g_feature = contract_basis_backward(model.pose_basis, g_shaped_posed);
    for (std::size_t j = 1; j < k; ++j) {
      Mat3 extra;
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) extra(p, q) = g_feature[(j - 1) * 9 + p * 3 + q];
      set_mat3(g_local_rot, j, Mat3(mat3_at(g_local_rot, j) + extra));
    }
  }

  for (std::size_t j = 0; j < k; ++j) {
    const Vec3 g = rodrigues_grad(row3(cache.theta, j), mat3_at(g_local_rot, j));
    set_row3(g_theta, j, g);
  }

  // rest = J_reg shaped; shaped feeds both the template blend and the rest
  // joints.
  Tensor g_shaped = g_shaped_posed;
  add_inplace(g_shaped, matmul_tn(model.joint_regressor, g_rest));
  Tensor g_beta = contract_basis_backward(model.shape_basis, g_shaped);
  return ManoGrads{std::move(g_theta), std::move(g_beta)};
}

Joints3D joints_to_21(const Tensor& posed_joints, const HandMesh& mesh,
                      const std::vector<int>& fingertip_ids) {
  const std::size_t k = posed_joints.rows();
  const std::size_t v = mesh.vertices.rows();
  Tensor out({k + fingertip_ids.size(), 3});
  for (std::size_t j = 0; j < k; ++j)
    for (int c = 0; c < 3; ++c) out(j, c) = posed_joints(j, c);
  for (std::size_t t = 0; t < fingertip_ids.size(); ++t) {
    const int id = fingertip_ids[t];
    check(id >= 0 && static_cast<std::size_t>(id) < v,
          "fingertip id " + std::to_string(id) + " out of range [0, " + std::to_string(v) + ")");
    for (int c = 0; c < 3; ++c) out(k + t, c) = mesh.vertices(id, c);
  }
  return Joints3D{out};
}

Joints21Grads joints_to_21_backward(const Tensor& grad_joints21, std::size_t num_joints,
                                    std::size_t num_vertices,
                                    const std::vector<int>& fingertip_ids) {
  check(grad_joints21.rows() == num_joints + fingertip_ids.size(),
        "joints_to_21_backward: row count mismatch");
  Joints21Grads g{Tensor({num_joints, 3}), Tensor({num_vertices, 3})};
  for (std::size_t j = 0; j < num_joints; ++j)
    for (int c = 0; c < 3; ++c) g.posed_joints(j, c) = grad_joints21(j, c);
  for (std::size_t t = 0; t < fingertip_ids.size(); ++t)
    for (int c = 0; c < 3; ++c)
      g.vertices(fingertip_ids[t], c) += grad_joints21(num_joints + t, c);
  return g;
}

ManoModel make_toy_model(Rng& rng, std::size_t num_vertices, std::size_t num_joints) {
  check(num_joints >= 2 && num_vertices >= num_joints,
        "make_toy_model: need v >= k >= 2");
  const std::size_t v = num_vertices, k = num_joints;
  ManoModel m;
  m.template_verts = rng.uniform_tensor({v, 3}, -0.05, 0.05);
  m.shape_basis = rng.uniform_tensor({10, v, 3}, -0.01, 0.01);
  m.pose_basis = rng.uniform_tensor({9 * (k - 1), v, 3}, -0.002, 0.002);

  m.joint_regressor = Tensor({k, v});
  for (std::size_t r = 0; r < k; ++r) {
    Scalar s = 0;
    for (std::size_t c = 0; c < v; ++c) {
      const Scalar w = static_cast<Scalar>(std::pow(rng.uniform01(), 6));
      m.joint_regressor(r, c) = w;
      s += w;
    }
    if (s == Scalar(0)) {
      m.joint_regressor(r, r % v) = Scalar(1);
      s = Scalar(1);
    }
    for (std::size_t c = 0; c < v; ++c) m.joint_regressor(r, c) /= s;
  }

  m.skin_weights = Tensor({v, k});
  for (std::size_t r = 0; r < v; ++r) {
    Scalar s = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const Scalar w = static_cast<Scalar>(std::pow(rng.uniform01(), 6));
      m.skin_weights(r, c) = w;
      s += w;
    }
    if (s == Scalar(0)) {
      m.skin_weights(r, r % k) = Scalar(1);
      s = Scalar(1);
    }
    for (std::size_t c = 0; c < k; ++c) m.skin_weights(r, c) /= s;
  }

  m.parents.resize(k);
  m.parents[0] = -1;
  for (std::size_t j = 1; j < k; ++j)
    m.parents[j] = static_cast<int>(rng.uniform_index(j));

  for (std::size_t i = 0; i + 2 < v; ++i)
    m.faces.push_back({static_cast<int>(i), static_cast<int>(i + 1), static_cast<int>(i + 2)});

  for (int t = 0; t < 5; ++t)
    m.fingertip_ids.push_back(static_cast<int>((v - 1 - t) % v));

  m.validate();
  return m;
}

}  // namespace manograph

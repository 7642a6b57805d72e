#include "manograph/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "manograph/ops.hpp"

namespace manograph {

namespace {

constexpr Scalar kDegenerate = Scalar(1e-12);

std::vector<std::pair<int, int>> unique_edges(const std::vector<std::array<int, 3>>& faces) {
  std::set<std::pair<int, int>> edges;
  for (const auto& f : faces)
    for (int c = 0; c < 3; ++c) {
      int a = f[c], b = f[(c + 1) % 3];
      if (a == b) continue;
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  return {edges.begin(), edges.end()};
}

struct Vec3 {
  Scalar x, y, z;
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Scalar dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  Scalar norm() const { return std::sqrt(dot(*this)); }
  Vec3 scaled(Scalar s) const { return {x * s, y * s, z * s}; }
};

Vec3 row(const Tensor& t, int i) { return {t(i, 0), t(i, 1), t(i, 2)}; }

void add_row(Tensor& t, int i, const Vec3& v) {
  t(i, 0) += v.x;
  t(i, 1) += v.y;
  t(i, 2) += v.z;
}

void check_term(const Tensor& pred, const Tensor& gt, const char* term) {
  check(!pred.empty() && !gt.empty(),
        std::string("mano_loss: term '") + term + "' is enabled but missing");
  check(pred.same_shape(gt), std::string("mano_loss: term '") + term + "' shape mismatch " +
                                 pred.shape_str() + " vs " + gt.shape_str());
}

}  // namespace

Scalar mean_sq_row_distance(const Tensor& pred, const Tensor& gt) {
  check_same_shape(pred, gt, "mean_sq_row_distance");
  check(pred.ndim() == 2 && pred.rows() > 0, "mean_sq_row_distance: expected (n, d), n > 0");
  Scalar acc = 0;
  for (std::size_t i = 0; i < pred.rows(); ++i)
    for (std::size_t j = 0; j < pred.cols(); ++j) {
      const Scalar d = pred(i, j) - gt(i, j);
      acc += d * d;
    }
  return acc / static_cast<Scalar>(pred.rows());
}

Tensor mean_sq_row_distance_backward(const Tensor& pred, const Tensor& gt, Scalar upstream) {
  Tensor g = sub(pred, gt);
  return scaled(g, upstream * 2 / static_cast<Scalar>(pred.rows()));
}

Scalar mean_sq_error(const Tensor& pred, const Tensor& gt) {
  check_same_shape(pred, gt, "mean_sq_error");
  check(pred.size() > 0, "mean_sq_error: empty tensors");
  Scalar acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Scalar d = pred[i] - gt[i];
    acc += d * d;
  }
  return acc / static_cast<Scalar>(pred.size());
}

Tensor mean_sq_error_backward(const Tensor& pred, const Tensor& gt, Scalar upstream) {
  Tensor g = sub(pred, gt);
  return scaled(g, upstream * 2 / static_cast<Scalar>(pred.size()));
}

void LossWeights::validate() const {
  check(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0 && lambda4 >= 0,
        "loss weights must be non-negative");
  check(lambda1 + lambda2 + lambda3 + lambda4 > 0, "loss weights must not all be zero");
}

ManoLossBreakdown mano_loss(const ManoQuantities& pred, const ManoQuantities& gt,
                            const ManoLossFlags& flags) {
  ManoLossBreakdown out;
  out.active = flags;
  if (flags.vertices) {
    check_term(pred.vertices, gt.vertices, "vertices");
    out.vertices = mean_sq_row_distance(pred.vertices, gt.vertices);
  }
  if (flags.joints) {
    check_term(pred.joints, gt.joints, "joints");
    out.joints = mean_sq_row_distance(pred.joints, gt.joints);
  }
  if (flags.theta) {
    check_term(pred.theta, gt.theta, "theta");
    out.theta = mean_sq_row_distance(pred.theta, gt.theta);
  }
  if (flags.beta) {
    check_term(pred.beta, gt.beta, "beta");
    out.beta = mean_sq_error(pred.beta, gt.beta);
  }
  if (flags.heatmaps) {
    check_term(pred.heatmaps, gt.heatmaps, "heatmaps");
    out.heatmaps = mean_sq_error(pred.heatmaps, gt.heatmaps);
  }
  if (flags.joints2d) {
    check_term(pred.joints2d, gt.joints2d, "joints2d");
    out.joints2d = mean_sq_row_distance(pred.joints2d, gt.joints2d);
  }
  out.total = out.vertices + out.joints + out.theta + out.beta + out.heatmaps + out.joints2d;
  return out;
}

ManoQuantities mano_loss_backward(const ManoQuantities& pred, const ManoQuantities& gt,
                                  const ManoLossFlags& flags, Scalar upstream) {
  ManoQuantities g;
  if (flags.vertices)
    g.vertices = mean_sq_row_distance_backward(pred.vertices, gt.vertices, upstream);
  if (flags.joints)
    g.joints = mean_sq_row_distance_backward(pred.joints, gt.joints, upstream);
  if (flags.theta) g.theta = mean_sq_row_distance_backward(pred.theta, gt.theta, upstream);
  if (flags.beta) g.beta = mean_sq_error_backward(pred.beta, gt.beta, upstream);
  if (flags.heatmaps)
    g.heatmaps = mean_sq_error_backward(pred.heatmaps, gt.heatmaps, upstream);
  if (flags.joints2d)
    g.joints2d = mean_sq_row_distance_backward(pred.joints2d, gt.joints2d, upstream);
  return g;
}

Scalar refinement_loss(const HandMesh& v_tilde, const Joints3D& j_tilde,
                       const HandMesh& gt_mesh, const Joints3D& gt_joints) {
  return mean_sq_row_distance(v_tilde.vertices, gt_mesh.vertices) +
         mean_sq_row_distance(j_tilde.joints, gt_joints.joints);
}

void refinement_loss_backward(const HandMesh& v_tilde, const Joints3D& j_tilde,
                              const HandMesh& gt_mesh, const Joints3D& gt_joints,
                              Scalar upstream, Tensor* grad_vertices, Tensor* grad_joints) {
  *grad_vertices = mean_sq_row_distance_backward(v_tilde.vertices, gt_mesh.vertices, upstream);
  *grad_joints = mean_sq_row_distance_backward(j_tilde.joints, gt_joints.joints, upstream);
}

MeshLossResult edge_loss(const HandMesh& pred, const HandMesh& gt,
                         const std::vector<std::array<int, 3>>& faces) {
  check_same_shape(pred.vertices, gt.vertices, "edge_loss");
  MeshLossResult out;
  Scalar acc = 0;
  std::size_t used = 0;
  for (const auto& [a, b] : unique_edges(faces)) {
    const Scalar gt_len = (row(gt.vertices, b) - row(gt.vertices, a)).norm();
    if (gt_len < kDegenerate) {
      ++out.skipped;
      continue;
    }
    const Scalar pred_len = (row(pred.vertices, b) - row(pred.vertices, a)).norm();
    acc += std::abs(pred_len - gt_len);
    ++used;
  }
  check(used > 0, "edge_loss: no usable edges");
  out.value = acc / static_cast<Scalar>(used);
  return out;
}

Tensor edge_loss_backward(const HandMesh& pred, const HandMesh& gt,
                          const std::vector<std::array<int, 3>>& faces, Scalar upstream) {
  const auto edges = unique_edges(faces);
  std::size_t used = 0;
  for (const auto& [a, b] : edges)
    if ((row(gt.vertices, b) - row(gt.vertices, a)).norm() >= kDegenerate) ++used;
  check(used > 0, "edge_loss: no usable edges");
  Tensor grad({pred.vertices.rows(), 3});
  const Scalar w = upstream / static_cast<Scalar>(used);
  for (const auto& [a, b] : edges) {
    const Scalar gt_len = (row(gt.vertices, b) - row(gt.vertices, a)).norm();
    if (gt_len < kDegenerate) continue;
    const Vec3 e = row(pred.vertices, b) - row(pred.vertices, a);
    const Scalar len = e.norm();
    if (len < kDegenerate) continue;  // subgradient 0 at the kink
    const Scalar sign = (len - gt_len) >= 0 ? Scalar(1) : Scalar(-1);
    const Vec3 g = e.scaled(w * sign / len);
    add_row(grad, b, g);
    add_row(grad, a, g.scaled(-1));
  }
  return grad;
}

MeshLossResult normal_loss(const HandMesh& pred, const HandMesh& gt,
                           const std::vector<std::array<int, 3>>& faces) {
  check_same_shape(pred.vertices, gt.vertices, "normal_loss");
  MeshLossResult out;
  Scalar acc = 0;
  std::size_t used = 0;
  for (const auto& f : faces) {
    const Vec3 n = (row(gt.vertices, f[1]) - row(gt.vertices, f[0]))
                       .cross(row(gt.vertices, f[2]) - row(gt.vertices, f[0]));
    const Scalar nn = n.norm();
    if (nn < kDegenerate) {
      out.skipped += 3;
      continue;
    }
    const Vec3 unit_n = n.scaled(1 / nn);
    for (int c = 0; c < 3; ++c) {
      const Vec3 e = row(pred.vertices, f[(c + 1) % 3]) - row(pred.vertices, f[c]);
      const Scalar len = e.norm();
      if (len < kDegenerate) {
        ++out.skipped;
        continue;
      }
      acc += std::abs(e.scaled(1 / len).dot(unit_n));
      ++used;
    }
  }
  check(used > 0, "normal_loss: no usable face-edge pairs");
  out.value = acc / static_cast<Scalar>(used);
  return out;
}

Tensor normal_loss_backward(const HandMesh& pred, const HandMesh& gt,
                            const std::vector<std::array<int, 3>>& faces, Scalar upstream) {
  // First pass counts usable pairs so the mean's denominator matches.
  std::size_t used = 0;
  for (const auto& f : faces) {
    const Vec3 n = (row(gt.vertices, f[1]) - row(gt.vertices, f[0]))
                       .cross(row(gt.vertices, f[2]) - row(gt.vertices, f[0]));
    if (n.norm() < kDegenerate) continue;
    for (int c = 0; c < 3; ++c)
      if ((row(pred.vertices, f[(c + 1) % 3]) - row(pred.vertices, f[c])).norm() >=
          kDegenerate)
        ++used;
  }
  check(used > 0, "normal_loss: no usable face-edge pairs");
  Tensor grad({pred.vertices.rows(), 3});
  const Scalar w = upstream / static_cast<Scalar>(used);
  for (const auto& f : faces) {
    const Vec3 n = (row(gt.vertices, f[1]) - row(gt.vertices, f[0]))
                       .cross(row(gt.vertices, f[2]) - row(gt.vertices, f[0]));
    const Scalar nn = n.norm();
    if (nn < kDegenerate) continue;
    const Vec3 unit_n = n.scaled(1 / nn);
    for (int c = 0; c < 3; ++c) {
      const int a = f[c], b = f[(c + 1) % 3];
      const Vec3 e = row(pred.vertices, b) - row(pred.vertices, a);
      const Scalar len = e.norm();
      if (len < kDegenerate) continue;
      const Vec3 unit_e = e.scaled(1 / len);
      const Scalar d = unit_e.dot(unit_n);
      const Scalar sign = d >= 0 ? Scalar(1) : Scalar(-1);
      // d<e_hat, n>/de = (n - e_hat <e_hat, n>) / |e|
      const Vec3 g =
          Vec3{unit_n.x - unit_e.x * d, unit_n.y - unit_e.y * d, unit_n.z - unit_e.z * d}
              .scaled(w * sign / len);
      add_row(grad, b, g);
      add_row(grad, a, g.scaled(-1));
    }
  }
  return grad;
}

LossReport total_loss(const LossWeights& weights, Scalar l_mano, Scalar l_r, Scalar l_e,
                      Scalar l_n) {
  weights.validate();
  LossReport report;
  report.l_mano = l_mano;
  report.l_r = l_r;
  report.l_e = l_e;
  report.l_n = l_n;
  report.total = weights.lambda1 * l_mano + weights.lambda2 * l_r + weights.lambda3 * l_e +
                 weights.lambda4 * l_n;
  return report;
}

}  // namespace manograph

#include "manograph/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace manograph {

namespace {

using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
using Vec3e = Eigen::Matrix<Scalar, 3, 1>;

Vec3e row3(const Tensor& t, std::size_t i) { return Vec3e(t(i, 0), t(i, 1), t(i, 2)); }

constexpr Scalar kMetersToMm = 1000;

}  // namespace

Scalar position_error_mm(const Tensor& pred, const Tensor& gt) {
  check_same_shape(pred, gt, "position_error");
  check(pred.ndim() == 2 && pred.cols() == 3 && pred.rows() > 0,
        "position_error: expected (n, 3)");
  Scalar acc = 0;
  for (std::size_t i = 0; i < pred.rows(); ++i) acc += (row3(pred, i) - row3(gt, i)).norm();
  return acc / static_cast<Scalar>(pred.rows()) * kMetersToMm;
}

SimilarityTransform procrustes_solve(const Tensor& pred, const Tensor& gt) {
  check_same_shape(pred, gt, "procrustes");
  check(pred.ndim() == 2 && pred.cols() == 3, "procrustes: expected (n, 3)");
  const std::size_t n = pred.rows();
  check(n >= 3, "procrustes: need at least 3 points");

  Vec3e mu_x = Vec3e::Zero(), mu_y = Vec3e::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_x += row3(pred, i);
    mu_y += row3(gt, i);
  }
  mu_x /= static_cast<Scalar>(n);
  mu_y /= static_cast<Scalar>(n);

  Mat3 cov = Mat3::Zero();  // (1/n) sum (y - mu_y)(x - mu_x)^T
  Scalar var_x = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3e xc = row3(pred, i) - mu_x;
    const Vec3e yc = row3(gt, i) - mu_y;
    cov += yc * xc.transpose();
    var_x += xc.squaredNorm();
  }
  cov /= static_cast<Scalar>(n);
  var_x /= static_cast<Scalar>(n);

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3e sv = svd.singularValues();
  if (var_x <= Scalar(0) || sv(1) <= Scalar(1e-12) * std::max(sv(0), Scalar(1)))
    throw std::invalid_argument("procrustes: rank-deficient point set");

  Vec3e d = Vec3e::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2) = -1;
  const Mat3 r = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  const Scalar scale = sv.dot(d) / var_x;
  const Vec3e t = mu_y - scale * (r * mu_x);

  SimilarityTransform out;
  out.scale = scale;
  out.rotation = Tensor({3, 3});
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) out.rotation(p, q) = r(p, q);
  out.translation = Tensor::vector({t.x(), t.y(), t.z()});
  return out;
}

Tensor apply_similarity(const SimilarityTransform& t, const Tensor& points) {
  check(points.ndim() == 2 && points.cols() == 3, "apply_similarity: expected (n, 3)");
  Mat3 r;
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) r(p, q) = t.rotation(p, q);
  const Vec3e tr(t.translation[0], t.translation[1], t.translation[2]);
  Tensor out({points.rows(), 3});
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const Vec3e y = t.scale * (r * row3(points, i)) + tr;
    out(i, 0) = y.x();
    out(i, 1) = y.y();
    out(i, 2) = y.z();
  }
  return out;
}

Tensor procrustes_align(const Tensor& pred, const Tensor& gt) {
  return apply_similarity(procrustes_solve(pred, gt), pred);
}

Scalar f_score(const HandMesh& pred, const HandMesh& gt, Scalar threshold_mm) {
  const std::size_t np = pred.vertices.rows(), ng = gt.vertices.rows();
  check(np > 0 && ng > 0, "f_score: empty mesh");
  check(threshold_mm > 0, "f_score: threshold must be positive");
  const Scalar tau = threshold_mm / kMetersToMm;

  auto fraction_within = [tau](const Tensor& from, const Tensor& to) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < from.rows(); ++i) {
      Scalar best = std::numeric_limits<Scalar>::infinity();
      for (std::size_t j = 0; j < to.rows(); ++j)
        best = std::min(best, (row3(from, i) - row3(to, j)).norm());
      if (best <= tau) ++hits;
    }
    return static_cast<Scalar>(hits) / static_cast<Scalar>(from.rows());
  };

  const Scalar precision = fraction_within(pred.vertices, gt.vertices);
  const Scalar recall = fraction_within(gt.vertices, pred.vertices);
  if (precision + recall == Scalar(0)) return 0;
  return 2 * precision * recall / (precision + recall);
}

PckResult pck_curve(const Tensor& pred, const Tensor& gt,
                    const std::vector<Scalar>& thresholds_mm) {
  check(!thresholds_mm.empty(), "pck_curve: empty threshold list");
  check_same_shape(pred, gt, "pck_curve");
  std::vector<Scalar> thresholds = thresholds_mm;
  std::sort(thresholds.begin(), thresholds.end());

  const std::size_t n = pred.rows();
  std::vector<Scalar> dist_mm(n);
  for (std::size_t i = 0; i < n; ++i)
    dist_mm[i] = (row3(pred, i) - row3(gt, i)).norm() * kMetersToMm;

  PckResult out;
  for (Scalar tau : thresholds) {
    std::size_t hits = 0;
    for (Scalar d : dist_mm)
      if (d <= tau) ++hits;
    out.fractions.push_back(static_cast<Scalar>(hits) / static_cast<Scalar>(n));
  }
  const Scalar range = thresholds.back() - thresholds.front();
  if (range <= Scalar(0)) {
    out.auc = out.fractions.front();
    return out;
  }
  Scalar area = 0;
  for (std::size_t i = 0; i + 1 < thresholds.size(); ++i)
    area += (out.fractions[i] + out.fractions[i + 1]) / 2 *
            (thresholds[i + 1] - thresholds[i]);
  out.auc = area / range;
  return out;
}

nlohmann::json MetricReport::to_json() const {
  return nlohmann::json{{"j_pe_mm", j_pe_mm},       {"v_pe_mm", v_pe_mm},
                        {"pa_j_pe_mm", pa_j_pe_mm}, {"pa_v_pe_mm", pa_v_pe_mm},
                        {"pa_f5", pa_f5},           {"pa_f15", pa_f15},
                        {"pck_auc", pck_auc}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.j_pe_mm = j.at("j_pe_mm").get<Scalar>();
  r.v_pe_mm = j.at("v_pe_mm").get<Scalar>();
  r.pa_j_pe_mm = j.at("pa_j_pe_mm").get<Scalar>();
  r.pa_v_pe_mm = j.at("pa_v_pe_mm").get<Scalar>();
  r.pa_f5 = j.at("pa_f5").get<Scalar>();
  r.pa_f15 = j.at("pa_f15").get<Scalar>();
  r.pck_auc = j.at("pck_auc").get<Scalar>();
  return r;
}

MetricReport compute_metrics(const PredictionSet& pred, const PredictionSet& gt) {
  check(pred.joints.size() == gt.joints.size() &&
            pred.vertices.size() == gt.vertices.size() &&
            pred.joints.size() == pred.vertices.size(),
        "compute_metrics: sample count mismatch");
  const std::size_t n = pred.joints.size();
  check(n > 0, "compute_metrics: no samples");

  std::vector<Scalar> pck_thresholds;
  for (int i = 0; i <= 20; ++i) pck_thresholds.push_back(Scalar(2.5) * i);

  MetricReport report;
  for (std::size_t s = 0; s < n; ++s) {
    report.j_pe_mm += position_error_mm(pred.joints[s], gt.joints[s]);
    report.v_pe_mm += position_error_mm(pred.vertices[s], gt.vertices[s]);
    const Tensor pa_joints = procrustes_align(pred.joints[s], gt.joints[s]);
    const Tensor pa_verts = procrustes_align(pred.vertices[s], gt.vertices[s]);
    report.pa_j_pe_mm += position_error_mm(pa_joints, gt.joints[s]);
    report.pa_v_pe_mm += position_error_mm(pa_verts, gt.vertices[s]);
    report.pa_f5 += f_score(HandMesh{pa_verts}, HandMesh{gt.vertices[s]}, 5);
    report.pa_f15 += f_score(HandMesh{pa_verts}, HandMesh{gt.vertices[s]}, 15);
    report.pck_auc += pck_curve(pa_joints, gt.joints[s], pck_thresholds).auc;
  }
  const Scalar inv = Scalar(1) / static_cast<Scalar>(n);
  report.j_pe_mm *= inv;
  report.v_pe_mm *= inv;
  report.pa_j_pe_mm *= inv;
  report.pa_v_pe_mm *= inv;
  report.pa_f5 *= inv;
  report.pa_f15 *= inv;
  report.pck_auc *= inv;
  return report;
}

}  // namespace manograph

#pragma once

#include <vector>

#include "manograph/mano.hpp"
#include "manograph/tensor.hpp"

#include "json.hpp"

namespace manograph {

// Mean per-row Euclidean distance, meters in, millimeters out.
Scalar position_error_mm(const Tensor& pred, const Tensor& gt);

struct SimilarityTransform {
  Scalar scale = 1;
  Tensor rotation;     // (3, 3)
  Tensor translation;  // (3)
};

// Closed-form similarity (rotation + isotropic scale + translation)
// minimizing least-squares distance from pred to gt, via the centered
// covariance SVD with a determinant guard against reflections. Errors on
// n < 3 or rank-deficient (degenerate) point sets.
SimilarityTransform procrustes_solve(const Tensor& pred, const Tensor& gt);
Tensor apply_similarity(const SimilarityTransform& t, const Tensor& points);
// procrustes_solve + apply.
Tensor procrustes_align(const Tensor& pred, const Tensor& gt);

// Harmonic mean of precision and recall of nearest-neighbor vertex matches
// within threshold_mm, symmetric over pred->gt and gt->pred.
Scalar f_score(const HandMesh& pred, const HandMesh& gt, Scalar threshold_mm);

struct PckResult {
  std::vector<Scalar> fractions;  // per threshold, non-decreasing
  Scalar auc = 0;                 // trapezoidal, normalized by the range
};

PckResult pck_curve(const Tensor& pred, const Tensor& gt,
                    const std::vector<Scalar>& thresholds_mm);

struct MetricReport {
  Scalar j_pe_mm = 0;
  Scalar v_pe_mm = 0;
  Scalar pa_j_pe_mm = 0;
  Scalar pa_v_pe_mm = 0;
  Scalar pa_f5 = 0;
  Scalar pa_f15 = 0;
  Scalar pck_auc = 0;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

/// Per-sample joint and vertex sets for batch evaluation.
struct PredictionSet {
  std::vector<Tensor> joints;    // each (J, 3), meters
  std::vector<Tensor> vertices;  // each (V, 3), meters
};

// Averages per-sample metrics. PA metrics align each sample independently;
// PCK runs on PA-aligned joints over 0..50 mm in 2.5 mm steps.
MetricReport compute_metrics(const PredictionSet& pred, const PredictionSet& gt);

}  // namespace manograph

#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "rotot/tensor.hpp"

namespace rotot {

struct RompcaConfig {
  int max_sweeps = 100;
  double tol = 1e-5;           // relative objective decrease per sweep
  int core_max_iter = 200;     // per-case core refinement
  double core_tol = 1e-10;
  double pinv_rel_tol = 1e-10;
};

struct MrcdConfig {
  double subset_fraction = 0.75;
  double cond_cap = 1e6;
};

// Robust multilinear PCA of a predictor set: robust center, per-mode
// orthonormal projections, per-case core tensors, fixed robust scales, cell
// and case weights, score distances and cellwise imputations.
struct RompcaModel {
  Tensor center;                       // P-shaped
  std::vector<Eigen::MatrixXd> proj;   // V_l: P_l x K_l, orthonormal columns
  Tensor cell_scales;                  // P-shaped, >= 0 (0 marks an imploded
                                       // cell treated as quadratic, weight 1)
  double case_scale = 0.0;

  std::vector<Tensor> cores;           // K-shaped, one per training case
  std::vector<Tensor> cell_weights;    // w1(resid/scale) * mask, in [0,1]
  std::vector<Tensor> imputed;         // recon + cell_weights .* (x - recon)
  std::vector<double> case_t;          // casewise deviations t_n
  std::vector<int> w_case;             // 1{t_n below the rejection point}
  std::vector<int> w_u;                // 1{SD_n <= c_u}
  std::vector<int> case_weight;        // w_case * w_u, binary
  std::vector<double> sd;              // score distances
  Eigen::MatrixXd core_cov;            // SPD covariance of vec(core)
  double c_u = 0.0;                    // sqrt of chi2(prod K, 0.99)

  std::vector<double> objective_trace;
  bool converged = false;
  int sweeps = 0;
  RompcaConfig cfg;  // settings the core refinement ran with; project_new
                     // reuses them so training cores are reproducible

  Shape pshape() const { return center.shape(); }
  Shape kshape() const;
};

// IRLS fit: center starts at the elementwise median, projections at the
// leading left singular vectors of the mode-wise matricized centered
// (cell-clipped, zero-filled) data; cell and case scales are M-scales of the
// initial residuals and stay fixed afterwards. Sweeps of
// weights -> cores -> projections -> center never increase the objective.
// Cores are finally re-solved per case by the same routine project_new uses,
// so projecting a training tensor reproduces its stored core. Throws
// ShapeError on invalid shapes/ranks and FitError when some cell is missing
// in every case.
RompcaModel rompca_fit(const std::vector<Tensor>& x, const Shape& ranks,
                       const RompcaConfig& cfg = {});

// center + [[core_n; V_1..V_L]] for a training case.
Tensor rompca_reconstruct(const RompcaModel& m, std::size_t n);

// Stored imputation of training case n: reconstruction where the cell weight
// is 0 (in particular at missing cells), observed value where it is 1,
// blended in between. Complete (maskless) tensor.
Tensor rompca_impute(const RompcaModel& m, std::size_t n);

int rompca_case_weight(const RompcaModel& m, std::size_t n);

// sqrt( vec(core)^T core_cov^{-1} vec(core) ).
double score_distance(const RompcaModel& m, const Tensor& core);

// Deterministic regularized covariance of the rows: covariance of the
// subset_fraction of rows with smallest coordinatewise robust z-norm
// (median/MAD), rescaled by the consistency factor of central-subset
// trimming, then blended toward a trace-scaled identity with the smallest
// shrinkage in {0, 0.01, 0.05, 0.1, 0.25} that caps the condition number.
Eigen::MatrixXd mrcd_lite(const Eigen::MatrixXd& rows,
                          const MrcdConfig& cfg = {});

struct RompcaProjection {
  Tensor core;          // K-shaped
  Tensor imputed;       // complete P-shaped tensor
  Tensor cell_weights;  // w1 * mask
  double t = 0.0;       // casewise deviation under the training scales
  double sd = 0.0;
};

// Core of a new tensor with center/projections/scales fixed: IRLS on the core
// alone from a mask-weighted least-squares start. Throws FitError when the
// input has no observed cell.
RompcaProjection rompca_project_new(const RompcaModel& m, const Tensor& x_star);

// Objective value of the model state on its training data (used by tests).
double rompca_objective(const RompcaModel& m, const std::vector<Tensor>& x);

}  // namespace rotot

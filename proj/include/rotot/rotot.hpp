#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "rotot/kernels.hpp"
#include "rotot/regression.hpp"
#include "rotot/rompca.hpp"
#include "rotot/tensor.hpp"

namespace rotot {

struct RototConfig {
  int max_iter = 100;
  double tol = 1e-5;  // relative objective decrease that stops the IRLS
  double pinv_rel_tol = 1e-10;
  std::uint64_t seed = 1;
  Shape x_ranks;                // ROMPCA ranks; empty keeps every mode full
  Rho rho1 = Rho::tanh_loss();  // cell loss; quadratic() gives the
  Rho rho2 = Rho::tanh_loss();  // case-robust-only / cell-robust-only variants
  int cv_folds = 5;
  RompcaConfig rompca;
};

// Cellwise screen of the stacked response matrix (one row per case, NaN marks
// a missing cell). Robust columnwise z-scores flag deviating cells; flagged
// and missing cells receive a prediction from the most rank-correlated other
// column when one is strongly associated, the column median otherwise; rows
// with more than 25% of their observed cells flagged form the suspect set.
struct DdcResult {
  Eigen::MatrixXi flags;    // N x Q, 1 = flagged cell (missing stays 0)
  Eigen::MatrixXd imputed;  // N x Q, complete
  std::vector<int> case_flags;  // ascending row indices
};
DdcResult ddc_lite(const Eigen::MatrixXd& y);

// Everything the initialization shares across fits on the same data: the
// predictor decomposition with its imputations and binary case weights, and
// the response screen with its imputed (complete) tensors.
struct InitBundle {
  RompcaModel rompca;
  std::vector<Tensor> x_imp;  // complete imputed predictors
  std::vector<int> wx;        // 0/1 predictor case weights
  DdcResult ddc;
  std::vector<Tensor> y_ddc;  // responses with flagged/missing cells replaced
};
InitBundle build_init_bundle(const std::vector<Tensor>& x,
                             const std::vector<Tensor>& y,
                             const RototConfig& cfg);

// Residual tensors y - b0 - <x,B>, masked like y (NaN at missing cells).
std::vector<Tensor> cell_residuals(const CpModel& cp,
                                   const std::vector<Tensor>& x_imp,
                                   const std::vector<Tensor>& y);

// Casewise deviations: sqrt of the average, over observed cells, of
// sigma1^2 rho1(r/sigma1), with the quadratic limit r^2/2 at zero-scale
// cells. A case with no observed cell gets NaN (excluded from any scale).
std::vector<double> case_deviations(const std::vector<Tensor>& residuals,
                                    const Tensor& sigma1, const Rho& rho1);

// The weight tensors of the estimating equations and their factors:
// total = x * case * cell * mask elementwise, everything in [0,1].
// Zero-scale cells carry cell weight 1 (quadratic limit); a zero case scale
// makes the case factor 1 at zero deviation and the rho's limit weight
// otherwise.
struct WeightSet {
  std::vector<Tensor> total;
  std::vector<Tensor> cell;
  std::vector<Tensor> mask;    // 1 observed, 0 missing
  std::vector<double> case_w;  // w2(t_n / sigma2)
  std::vector<int> x_w;
};
WeightSet build_weights(const std::vector<Tensor>& residuals,
                        const Tensor& sigma1, double sigma2,
                        const std::vector<int>& wx, const Rho& rho1,
                        const Rho& rho2);

// The robust objective: (sigma2^2/m) sum_n m_n w^x_n rho2(t_n/sigma2)
// + lambda ||B||_F^2, with the same zero-scale limits as build_weights.
double rotot_objective(const std::vector<Tensor>& x_imp,
                       const std::vector<Tensor>& y, const CpModel& cp,
                       const Tensor& sigma1, double sigma2,
                       const std::vector<int>& wx, double lambda,
                       const Rho& rho1, const Rho& rho2);

// Max-abs entry of the first-order expressions (factor blocks and intercept)
// at the given point, with weights evaluated there. Zero at a fixed point.
double stationarity_gap(const std::vector<Tensor>& x_imp,
                        const std::vector<Tensor>& y, const CpModel& cp,
                        const WeightSet& w, double lambda);

struct IrlsResult {
  CpModel cp;
  std::vector<double> objective_trace;  // start value, then one per iteration
  bool converged = false;
  int iterations = 0;
  int frozen_intercept_cells = 0;  // zero-total-weight cells at the last pass
};

// Reweighted Gauss-Seidel descent of the robust objective from the given
// start, scales fixed. Weights are frozen over each iteration's block
// updates and refreshed afterwards. Throws FitError when every response
// cell carries zero weight.
IrlsResult irls_fit(const std::vector<Tensor>& x_imp,
                    const std::vector<Tensor>& y, const std::vector<int>& wx,
                    CpModel start, const Tensor& sigma1, double sigma2,
                    double lambda, const RototConfig& cfg);

struct InitResult {
  CpModel cp;
  Tensor sigma1;
  double sigma2 = 0.0;
  int chosen = 1;              // 1 = trimmed baseline, 2 = near-L1 refinement
  double sigma2_other = 0.0;   // scale of the rejected candidate
  std::vector<int> subset;     // cases the baseline candidate was fit on
};

// Two-candidate start: a penalized baseline fit on the cleanest 75% of cases
// (screened responses, imputed predictors), and a near-L1 reweighted fit on
// all data started from it. Each candidate is scored by the M-scale of its
// casewise deviations; the smaller scale wins and its scales are kept.
InitResult initialize(const InitBundle& bundle, const std::vector<Tensor>& y,
                      int rank_r, double lambda, const RototConfig& cfg);

struct RototModel {
  CpModel cp;
  double lambda = 0.0;
  int rank_r = 0;
  Tensor cell_scales;
  double case_scale = 0.0;
  Rho rho1, rho2;
  RompcaModel rompca;
  std::vector<double> objective_trace;
  bool converged = false;
  int iterations = 0;
  int frozen_intercept_cells = 0;
  int init_candidate = 1;
};

RototModel rotot_fit(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
                     int rank_r, double lambda, const RototConfig& cfg);
RototModel rotot_fit_bundled(const InitBundle& bundle,
                             const std::vector<Tensor>& y, int rank_r,
                             double lambda, const RototConfig& cfg);

struct CvEntry {
  int rank_r;
  double lambda;
  double score;  // average validation deviation scale over the folds
};
struct CvResult {
  int best_rank = 0;
  double best_lambda = 0.0;
  std::vector<CvEntry> table;  // rank-major, lambda-minor, both ascending
};

// K-fold selection over the grids, restricted to cases with predictor weight
// one. Folds are an interleaved seeded permutation; every training split is
// re-initialized from scratch while the predictor preparation is shared.
// Validation cases are scored by the M-scale of their deviations under the
// training fit's cell scales; ties prefer smaller rank, then smaller lambda.
CvResult cross_validate(const InitBundle& bundle, const std::vector<Tensor>& y,
                        const std::vector<int>& r_grid,
                        const std::vector<double>& lambda_grid,
                        const RototConfig& cfg);

// b0 + <x*_imp, B> with the predictor imputed by the stored decomposition.
Tensor rotot_predict(const RototModel& m, const Tensor& x_star);

}  // namespace rotot

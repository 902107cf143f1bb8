#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rotot/tensor.hpp"

namespace rotot {

// Coefficients of the tensor-on-tensor model: response-shaped intercept plus a
// CP-parameterized slope B = [[u_1..u_L, v_1..v_M]] that is contracted with
// the predictor over all of its modes.
struct CpModel {
  Tensor b0;                       // intercept, response-shaped
  std::vector<Eigen::MatrixXd> u;  // predictor-side factors, u[l]: P_l x R
  std::vector<Eigen::MatrixXd> v;  // response-side factors, v[m]: Q_m x R

  int rank() const;
  Shape pshape() const;
  Shape qshape() const;
};

CpModel make_cp_model(const Shape& pshape, const Shape& qshape, int rank);

// Materialized slope tensor (P_1..P_L x Q_1..Q_M) and its squared norm via the
// Hadamard product of factor Grams (cheap, no materialization).
Tensor cp_slope_full(const CpModel& m);
double cp_slope_norm_sq(const CpModel& m);

// Slope application <X, B>, response-shaped; the intercept is not added.
Tensor cp_apply(const CpModel& m, const Tensor& x);

// Hadamard product of every factor Gram except the given block (the R x R
// T-matrices of the block normal equations).
Eigen::MatrixXd gram_except_u(const CpModel& m, int l);
Eigen::MatrixXd gram_except_v(const CpModel& m, int mmode);

// Per-case design tensors. build_c keeps predictor mode l and the rank axis in
// front of the response modes; build_d replaces response mode `mmode` by the
// rank axis.
Tensor build_c(const Tensor& x, const CpModel& m, int l);
Tensor build_d(const Tensor& x, const CpModel& m, int mmode);

// Solver-facing matricizations. build_c_mat rows run over response cells
// (first response mode fastest) and columns over (p_l, r) with p_l fastest,
// matching the column-major vec of u[l]:  vec(<X,B>) = C * vec(u_l).
// build_d_mat rows run over all response modes except mmode:
// mode-m matricization of <X,B> equals v[mmode] * D^T.
Eigen::MatrixXd build_c_mat(const Tensor& x, const CpModel& m, int l);
Eigen::MatrixXd build_d_mat(const Tensor& x, const CpModel& m, int mmode);

// Moore-Penrose solve of a symmetric PSD system via eigendecomposition;
// eigenvalues below rel_tol * max eigenvalue are dropped.
Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                           double rel_tol);

// Exact minimizers of the weighted penalized least-squares criterion
//   sum_n sum_q w_n[q] (y_n[q] - b0[q] - <x_n,B>[q])^2  + penalty-term
// in one coordinate block with all others held fixed. `penalty` multiplies
// (T kron I) in the normal equations. Cells with zero weight are skipped
// entirely, which is how missing responses (NaN under a zero weight) stay out
// of the algebra.
void update_u(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
              const std::vector<Tensor>& w, CpModel& m, int l, double penalty,
              double rel_tol);
void update_v(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
              const std::vector<Tensor>& w, CpModel& m, int mmode,
              double penalty, double rel_tol);

// Weighted-mean intercept update. Cells whose total weight vanishes keep their
// previous value; returns how many were frozen that way.
int update_b0(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
              const std::vector<Tensor>& w, CpModel& m);

// Rescales the r-th column of every factor to their geometric-mean norm. The
// slope tensor (and with it every objective) is unchanged; components with a
// zero column are left alone.
void balance_factors(CpModel& m);

// Weighted penalized objective the block updates minimize (used in tests and
// descent checks): sum_n sum_q w (y - b0 - <x,B>)^2 + penalty_norm * ||B||^2.
double weighted_objective(const std::vector<Tensor>& x,
                          const std::vector<Tensor>& y,
                          const std::vector<Tensor>& w, const CpModel& m,
                          double penalty_norm);

}  // namespace rotot

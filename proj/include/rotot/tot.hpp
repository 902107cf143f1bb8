#pragma once

#include <cstdint>
#include <vector>

#include "rotot/regression.hpp"
#include "rotot/tensor.hpp"

namespace rotot {

struct TotConfig {
  int max_sweeps = 100;
  double tol = 1e-5;          // relative objective decrease per sweep
  double pinv_rel_tol = 1e-10;
  std::uint64_t seed = 1;     // factor initialization
};

struct TotFit {
  CpModel model;
  double lambda = 0.0;
  std::vector<double> objective_trace;  // one entry per completed sweep
  bool converged = false;
  int sweeps = 0;
};

// Penalized least-squares criterion sum_n ||y_n - b0 - <x_n,B>||_F^2
// + lambda * ||B||_F^2. Data must be complete.
double tot_objective(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
                     const CpModel& m, double lambda);

// Alternating least squares from a random start: factors N(0,1) seeded by
// cfg.seed, intercept at the cell means. Requires complete data of matching
// shapes.
TotFit tot_fit(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
               int rank, double lambda, const TotConfig& cfg);

// Same solver continued from a caller-supplied model.
TotFit tot_fit_warm(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
                    double lambda, const TotConfig& cfg, CpModel start);

// Fitted response b0 + <x, B> for one predictor.
Tensor tot_predict(const CpModel& m, const Tensor& x);

}  // namespace rotot

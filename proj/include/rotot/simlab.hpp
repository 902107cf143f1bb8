#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rotot/regression.hpp"
#include "rotot/rotot.hpp"
#include "rotot/tensor.hpp"

namespace rotot {

// Contamination recipe for one tensor side (predictors or responses).
// gamma_cell / gamma_case are the final injected magnitudes; scenario presets
// fold the gamma * c^cell / gamma * c^case products into them.
struct ContamSpec {
  double eps_cell = 0.0;   // fraction of all entries replaced by outlying cells
  double eps_case = 0.0;   // fraction of cases contaminated as a whole
  double eps_miss = 0.0;   // fraction of entries set missing afterwards
  double gamma_cell = 0.0;
  double gamma_case = 0.0;
};

struct SimConfig {
  int n = 60;
  int n_val = 40;
  Shape p_dims{8, 10};   // predictor mode sizes
  Shape k_ranks{3, 4};   // leading eigen-directions carrying the signal
  Shape q_dims{4, 8};    // response mode sizes
  int rank_r = 2;        // CP rank of the true slope
  double snr = 5.0;
  std::uint64_t seed = 1;
  ContamSpec x_contam;
  ContamSpec y_contam;
};

// One synthetic draw. x/y are the clean training pair (contaminate mutates them
// in place), x_val/y_val the always-clean validation pair, x_signal the
// noiseless predictor structure kept for variance accounting, truth the
// generating coefficients with the slope already scaled so that
//   sum_n ||<x_n, B>||_F^2 / sum_n ||e_n||_F^2 = snr
// holds exactly on the realized training draw.
struct SimData {
  std::vector<Tensor> x, y;
  std::vector<Tensor> x_val, y_val;
  std::vector<Tensor> x_signal;
  CpModel truth;
  double slope_scale = 0.0;  // the solved multiplier c
};

// Orthonormal eigenbasis of the covariance with entries rho^|i-j|, columns in
// descending eigenvalue order, each column's largest-magnitude entry positive.
Eigen::MatrixXd ar1_eigenbasis(int p, double rho = -0.9);

// Predictor cores are N(0,1) entries damped per position by
// ((prod P_l) / (prod p_l))^0.9 with 1-based index tuples, pushed through the
// full eigenbasis of each mode; responses follow the linear model with N(0,1)
// errors and a zero intercept. Throws ShapeError on ranks exceeding dims.
SimData generate(const SimConfig& cfg);

// Positions eligible for a structured casewise predictor core: 1 where every
// mode index (1-based) lies in {1,2} or {K_l+1, K_l+2}, else 0; indexed by the
// tensor linearization of p_dims.
std::vector<char> outlier_core_support(const Shape& p_dims,
                                       const Shape& k_ranks);

struct CellHit {
  int case_index = 0;
  int cell = 0;  // linear index within the tensor
};

struct ContamLedger {
  std::vector<int> y_cases, x_cases;           // disjoint from each other
  std::vector<CellHit> y_cells, x_cells;       // never inside casewise cases
  std::vector<CellHit> y_missing, x_missing;   // never on an injected cell
  bool empty() const;
};

// Applies cfg.x_contam / cfg.y_contam to the training pair in place and
// returns the exact injected positions. Casewise sets are drawn first and kept
// disjoint across the two sides; cellwise draws exclude every casewise-hit
// case; missing entries are drawn last, away from injected cells. Cell
// magnitudes are gamma_cell times the per-cell standard deviation of the clean
// data. Throws std::invalid_argument on infeasible fractions.
ContamLedger contaminate(SimData& data, const SimConfig& cfg);

// sum_v ||y_v - yhat_v||_F / sum_v ||y_v - ybar||_F with ybar the elementwise
// mean of the validation responses. Complete tensors assumed. 0/0 counts as 0.
double rpe(const std::vector<Tensor>& y_val, const std::vector<Tensor>& y_hat);

// Trimmed per-cell mean squared error: for every response cell keep the
// H = ceil(0.75 * N_v) smallest absolute residuals across cases and average
// their squares over H times the number of cells.
double robmse(const std::vector<Tensor>& y_val,
              const std::vector<Tensor>& y_hat);

// The four estimators compared in the contamination studies. onlycell keeps
// the cellwise loss and drops the casewise one (rho2 quadratic); onlycase the
// reverse; tot is the unweighted least-squares baseline.
enum class Method { tot, onlycell, onlycase, rotot };
const char* method_name(Method m);

struct ScenarioSpec {
  int scenario = 1;   // 1: response contamination varies, 2: predictor varies
  int setting = 0;    // 0 cell-only, 1 case-only, 2 both (on the varying side)
  double snr = 5.0;
  std::vector<double> gamma_grid{0.0, 2.0, 4.0, 8.0};
  int replications = 20;
  int tune_replications = 3;  // clean draws used for the lambda selection
  std::uint64_t seed = 1;
  double eps_miss = 0.0;      // applied to both sides when positive
  SimConfig base;             // sizes; contamination fields are overwritten
  std::vector<Method> methods{Method::tot, Method::onlycell, Method::onlycase,
                              Method::rotot};
  std::vector<double> lambda_grid{1e-5, 1e-4, 1e-3, 1e-2};
  double fixed_lambda = -1.0;  // >= 0 skips the clean-data selection
};

// Fills cfg.x_contam / cfg.y_contam for one grid point of a scenario. gamma 0
// shuts off every outlier fraction (missingness stays).
void apply_scenario(SimConfig& cfg, int scenario, int setting, double snr,
                    double gamma, double eps_miss);

struct ScenarioRow {
  Method method = Method::tot;
  int scenario = 1;
  double snr = 0.0;
  double gamma = 0.0;
  int replication = 0;
  double rpe = 0.0;
};

struct ScenarioTable {
  std::vector<ScenarioRow> rows;
  std::vector<std::pair<Method, double>> lambdas;  // selected per method
};

// Runs the full grid: one generated dataset per replication, contaminated per
// gamma, fitted by every requested method (the robust ones share a screening
// bundle per draw), scored by validation rpe. The least-squares baseline is
// skipped when missingness is requested since it needs complete data.
// Deterministic in spec.seed.
ScenarioTable run_scenario(const ScenarioSpec& spec);

double median_rpe(const ScenarioTable& t, Method m, double gamma);

// results: header method,scenario,snr,gamma,replication,rpe; medians: header
// method,scenario,snr,gamma,median_rpe. Floats at 17 significant digits.
void write_results_csv(std::ostream& os, const ScenarioTable& t);
void write_medians_csv(std::ostream& os, const ScenarioTable& t);

// Flat key=value text, '#' comments. Keys: scenario, setting (cell|case|both
// or 0|1|2), snr, gamma_grid, replications, tune_replications, seed, eps_miss,
// n, n_val, p_dims, k_ranks, q_dims, rank_r, lambda, lambda_grid, methods.
// Lists are comma-separated. Unknown keys throw std::invalid_argument.
ScenarioSpec parse_scenario_config(std::istream& in);

}  // namespace rotot

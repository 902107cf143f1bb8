#include "rotot/tot.hpp"

#include <cmath>
#include <string>

#include "rotot/errors.hpp"
#include "rotot/rng.hpp"

namespace rotot {

namespace {

void check_data(const std::vector<Tensor>& x, const std::vector<Tensor>& y) {
  if (x.empty() || x.size() != y.size())
    throw ShapeError("tot: need matching nonempty predictor/response lists");
  for (std::size_t n = 0; n < x.size(); ++n) {
    if (x[n].shape() != x[0].shape() || y[n].shape() != y[0].shape())
      throw ShapeError("tot: case " + std::to_string(n) +
                       " has inconsistent shape");
    if (x[n].has_missing() || y[n].has_missing())
      throw ShapeError("tot: case " + std::to_string(n) +
                       " has missing cells; tot requires complete data");
  }
}

Tensor cell_means(const std::vector<Tensor>& y) {
  Tensor mean(y[0].shape(), 0.0);
  for (const Tensor& t : y)
    for (std::size_t q = 0; q < t.size(); ++q)
      mean.values()[q] += t.values()[q];
  for (std::size_t q = 0; q < mean.size(); ++q)
    mean.values()[q] /= static_cast<double>(y.size());
  return mean;
}

TotFit run_sweeps(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
                  double lambda, const TotConfig& cfg, CpModel model) {
  const std::vector<Tensor> unit(y.size(), Tensor(y[0].shape(), 1.0));
  TotFit fit;
  fit.lambda = lambda;
  double prev = tot_objective(x, y, model, lambda);
  for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    for (int l = 0; l < static_cast<int>(model.u.size()); ++l)
      update_u(x, y, unit, model, l, lambda, cfg.pinv_rel_tol);
    for (int mm = 0; mm < static_cast<int>(model.v.size()); ++mm)
      update_v(x, y, unit, model, mm, lambda, cfg.pinv_rel_tol);
    update_b0(x, y, unit, model);
    balance_factors(model);
    const double cur = tot_objective(x, y, model, lambda);
    fit.objective_trace.push_back(cur);
    fit.sweeps = sweep + 1;
    const double rel = (prev - cur) / std::max(prev, 1e-300);
    prev = cur;
    if (rel <= cfg.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.model = std::move(model);
  return fit;
}

}  // namespace

double tot_objective(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
                     const CpModel& m, double lambda) {
  double total = lambda * cp_slope_norm_sq(m);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const Tensor fit = cp_apply(m, x[n]);
    for (std::size_t q = 0; q < y[n].size(); ++q) {
      const double r = y[n].values()[q] - m.b0.values()[q] - fit.values()[q];
      total += r * r;
    }
  }
  return total;
}

TotFit tot_fit(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
               int rank, double lambda, const TotConfig& cfg) {
  check_data(x, y);
  CpModel model = make_cp_model(x[0].shape(), y[0].shape(), rank);
  Rng rng(cfg.seed);
  for (auto& f : model.u)
    for (Eigen::Index j = 0; j < f.cols(); ++j)
      for (Eigen::Index i = 0; i < f.rows(); ++i) f(i, j) = rng.normal();
  for (auto& f : model.v)
    for (Eigen::Index j = 0; j < f.cols(); ++j)
      for (Eigen::Index i = 0; i < f.rows(); ++i) f(i, j) = rng.normal();
  model.b0 = cell_means(y);
  return run_sweeps(x, y, lambda, cfg, std::move(model));
}

TotFit tot_fit_warm(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
                    double lambda, const TotConfig& cfg, CpModel start) {
  check_data(x, y);
  if (start.pshape() != x[0].shape() || start.qshape() != y[0].shape())
    throw ShapeError("tot: warm start model does not match data shapes");
  return run_sweeps(x, y, lambda, cfg, std::move(start));
}

Tensor tot_predict(const CpModel& m, const Tensor& x) {
  Tensor out = cp_apply(m, x);
  for (std::size_t q = 0; q < out.size(); ++q)
    out.values()[q] += m.b0.values()[q];
  return out;
}

}  // namespace rotot

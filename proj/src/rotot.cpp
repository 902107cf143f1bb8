#include "rotot/rotot.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>

#include "rotot/errors.hpp"
#include "rotot/rng.hpp"
#include "rotot/stats.hpp"
#include "rotot/tot.hpp"

namespace rotot {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Zero-scale limits: a cell (or the case level) whose scale imploded to 0 is
// treated as exactly quadratic, so losses stay finite and the IRLS weight is
// the constant 1 that matches the quadratic derivative.
double cell_loss(const Rho& rho1, double r, double s) {
  if (s > 0.0) return s * s * rho1.rho(r / s);
  return 0.5 * r * r;
}

double cell_irls_weight(const Rho& rho1, double r, double s) {
  if (s > 0.0) return rho1.weight(r / s);
  return 1.0;
}

double case_loss(const Rho& rho2, double t, double s2) {
  if (s2 > 0.0) return s2 * s2 * rho2.rho(t / s2);
  return 0.5 * t * t;
}

double case_irls_weight(const Rho& rho2, double t, double s2) {
  if (std::isnan(t)) return 1.0;  // no observed cells; the mask zeroes W anyway
  if (s2 > 0.0) return rho2.weight(t / s2);
  return 1.0;
}

std::size_t observed_total(const std::vector<Tensor>& y) {
  std::size_t m = 0;
  for (const auto& t : y) m += t.observed_count();
  return m;
}

WeightSet weights_given(const std::vector<Tensor>& residuals,
                        const std::vector<double>& t, const Tensor& sigma1,
                        double sigma2, const std::vector<int>& wx,
                        const Rho& rho1, const Rho& rho2) {
  WeightSet ws;
  ws.x_w = wx;
  const std::size_t cells = sigma1.size();
  for (std::size_t n = 0; n < residuals.size(); ++n) {
    const double w2 = case_irls_weight(rho2, t[n], sigma2);
    ws.case_w.push_back(w2);
    Tensor cell(sigma1.shape(), 1.0);
    Tensor mask(sigma1.shape(), 1.0);
    Tensor total(sigma1.shape(), 0.0);
    for (std::size_t j = 0; j < cells; ++j) {
      const bool obs = residuals[n].observed(j);
      mask[j] = obs ? 1.0 : 0.0;
      if (obs)
        cell[j] = cell_irls_weight(rho1, residuals[n][j], sigma1[j]);
      total[j] = static_cast<double>(wx[n]) * w2 * cell[j] * mask[j];
    }
    ws.cell.push_back(std::move(cell));
    ws.mask.push_back(std::move(mask));
    ws.total.push_back(std::move(total));
  }
  return ws;
}

double objective_given(const std::vector<Tensor>& residuals,
                       const std::vector<double>& t,
                       const std::vector<int>& wx, double sigma2,
                       const Rho& rho2, double lambda, const CpModel& cp,
                       std::size_t m) {
  double acc = 0.0;
  for (std::size_t n = 0; n < residuals.size(); ++n) {
    const std::size_t mn = residuals[n].observed_count();
    if (mn == 0) continue;
    acc += static_cast<double>(mn) * static_cast<double>(wx[n]) *
           case_loss(rho2, t[n], sigma2);
  }
  return acc / static_cast<double>(m) + lambda * cp_slope_norm_sq(cp);
}

struct ScreenedY {
  DdcResult ddc;
  std::vector<Tensor> y_ddc;
};

// Stacks the responses one row per case (NaN at missing cells), screens the
// matrix, and rebuilds complete tensors with flagged and missing cells
// replaced by the screen's imputations.
ScreenedY screen_responses(const std::vector<Tensor>& y) {
  const std::size_t n = y.size();
  const Shape qshape = y[0].shape();
  const std::size_t cells = shape_size(qshape);
  Eigen::MatrixXd stacked(static_cast<Eigen::Index>(n),
                          static_cast<Eigen::Index>(cells));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < cells; ++j)
      stacked(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          y[i].observed(j) ? y[i][j] : kNan;
  ScreenedY out;
  out.ddc = ddc_lite(stacked);
  out.y_ddc.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor t(qshape);
    for (std::size_t j = 0; j < cells; ++j) {
      const bool clean = y[i].observed(j) &&
                         out.ddc.flags(static_cast<Eigen::Index>(i),
                                       static_cast<Eigen::Index>(j)) == 0;
      t[j] = clean ? y[i][j]
                   : out.ddc.imputed(static_cast<Eigen::Index>(i),
                                     static_cast<Eigen::Index>(j));
    }
    out.y_ddc.push_back(std::move(t));
  }
  return out;
}

// IRLS core shared by the fit and the initialization's near-L1 candidate;
// the loss pair is explicit so the caller's config losses stay untouched.
IrlsResult run_irls(const std::vector<Tensor>& x_imp,
                    const std::vector<Tensor>& y, const std::vector<int>& wx,
                    CpModel start, const Tensor& sigma1, double sigma2,
                    const Rho& rho1, const Rho& rho2, double lambda,
                    const RototConfig& cfg) {
  const std::size_t m = observed_total(y);
  if (m == 0) throw FitError("irls: no observed response cells");
  const double penalty = 4.0 * lambda * static_cast<double>(m);

  IrlsResult out;
  out.cp = std::move(start);
  const int nl = static_cast<int>(out.cp.u.size());
  const int nm = static_cast<int>(out.cp.v.size());

  auto res = cell_residuals(out.cp, x_imp, y);
  auto t = case_deviations(res, sigma1, rho1);
  WeightSet w = weights_given(res, t, sigma1, sigma2, wx, rho1, rho2);
  double obj = objective_given(res, t, wx, sigma2, rho2, lambda, out.cp, m);
  out.objective_trace.push_back(obj);

  for (int it = 1; it <= cfg.max_iter; ++it) {
    double wsum = 0.0;
    for (const auto& wt : w.total)
      for (double v : wt.values()) wsum += v;
    if (wsum <= 0.0)
      throw FitError("irls: every response cell carries zero weight");

    for (int l = 0; l < nl; ++l)
      update_u(x_imp, y, w.total, out.cp, l, penalty, cfg.pinv_rel_tol);
    for (int mm = 0; mm < nm; ++mm)
      update_v(x_imp, y, w.total, out.cp, mm, penalty, cfg.pinv_rel_tol);
    out.frozen_intercept_cells = update_b0(x_imp, y, w.total, out.cp);
    balance_factors(out.cp);

    res = cell_residuals(out.cp, x_imp, y);
    t = case_deviations(res, sigma1, rho1);
    w = weights_given(res, t, sigma1, sigma2, wx, rho1, rho2);
    const double next =
        objective_given(res, t, wx, sigma2, rho2, lambda, out.cp, m);
    out.objective_trace.push_back(next);
    out.iterations = it;

    const double rel = (obj - next) / std::max(obj, 1e-300);
    obj = next;
    if (rel <= cfg.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// Per-candidate scales: sigma1 is the cellwise M-scale of the residuals
// across cases (0 when a cell is never observed), sigma2 the M-scale of the
// casewise deviations under sigma1.
std::pair<Tensor, double> candidate_scales(const CpModel& cp,
                                           const std::vector<Tensor>& x_imp,
                                           const std::vector<Tensor>& y,
                                           const Rho& rho1) {
  auto res = cell_residuals(cp, x_imp, y);
  const Shape qshape = y[0].shape();
  const std::size_t cells = shape_size(qshape);
  Tensor s1(qshape, 0.0);
  std::vector<double> sample;
  for (std::size_t j = 0; j < cells; ++j) {
    sample.clear();
    for (const auto& r : res)
      if (r.observed(j)) sample.push_back(r[j]);
    s1[j] = sample.empty() ? 0.0 : mscale(sample);
  }
  auto t = case_deviations(res, s1, rho1);
  std::vector<double> finite;
  for (double v : t)
    if (!std::isnan(v)) finite.push_back(v);
  const double s2 = finite.empty() ? 0.0 : mscale(finite);
  return {std::move(s1), s2};
}

InitResult init_core(const std::vector<Tensor>& x_imp,
                     const std::vector<Tensor>& y,
                     const std::vector<Tensor>& y_ddc, const DdcResult& ddc,
                     const std::vector<int>& wx, int rank_r, double lambda,
                     const RototConfig& cfg) {
  const std::size_t n = y.size();
  if (rank_r < 1) throw ShapeError("initialize: rank must be >= 1");
  if (lambda < 0.0) throw ShapeError("initialize: lambda must be >= 0");

  std::vector<char> bad(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (wx[i] == 0) bad[i] = 1;
  for (int i : ddc.case_flags) bad[static_cast<std::size_t>(i)] = 1;
  std::vector<int> good;
  for (std::size_t i = 0; i < n; ++i)
    if (!bad[i]) good.push_back(static_cast<int>(i));

  // Subset of cases the baseline candidate sees: the ceil(0.75N) unflagged
  // cases with the fewest flagged response cells, or every unflagged case
  // when more than a quarter of all cases are flagged.
  std::vector<int> subset;
  const std::size_t nbad = n - good.size();
  if (4 * nbad > n) {
    subset = good;
  } else {
    std::vector<int> flagcount(n, 0);
    for (Eigen::Index i = 0; i < ddc.flags.rows(); ++i)
      for (Eigen::Index j = 0; j < ddc.flags.cols(); ++j)
        flagcount[static_cast<std::size_t>(i)] += ddc.flags(i, j);
    std::stable_sort(good.begin(), good.end(), [&](int a, int b) {
      return flagcount[static_cast<std::size_t>(a)] <
             flagcount[static_cast<std::size_t>(b)];
    });
    const std::size_t h = (3 * n + 3) / 4;  // ceil(0.75 n), <= good.size()
    subset.assign(good.begin(), good.begin() + static_cast<long>(h));
  }
  const std::size_t need =
      std::max<std::size_t>(static_cast<std::size_t>(rank_r), 5);
  if (subset.size() < need)
    throw FitError("initialize: only " + std::to_string(subset.size()) +
                   " usable cases, need " + std::to_string(need));
  std::sort(subset.begin(), subset.end());

  std::vector<Tensor> xs, ys;
  xs.reserve(subset.size());
  ys.reserve(subset.size());
  for (int i : subset) {
    xs.push_back(x_imp[static_cast<std::size_t>(i)]);
    ys.push_back(y_ddc[static_cast<std::size_t>(i)]);
  }
  const std::size_t mh = subset.size() * shape_size(y[0].shape());
  TotConfig tc;
  tc.max_sweeps = cfg.max_iter;
  tc.tol = cfg.tol;
  tc.pinv_rel_tol = cfg.pinv_rel_tol;
  tc.seed = cfg.seed;
  CpModel cand1 =
      tot_fit(xs, ys, rank_r, 4.0 * lambda * static_cast<double>(mh), tc)
          .model;

  // Candidate 2 runs the reweighted solver on all data with a near-L1 cell
  // loss, quadratic case loss and unit scales, warm-started from candidate 1.
  const Tensor unit(y[0].shape(), 1.0);
  CpModel cand2 = run_irls(x_imp, y, wx, cand1, unit, 1.0, Rho::near_l1(),
                           Rho::quadratic(), lambda, cfg)
                      .cp;

  auto [s1a, s2a] = candidate_scales(cand1, x_imp, y, cfg.rho1);
  auto [s1b, s2b] = candidate_scales(cand2, x_imp, y, cfg.rho1);

  InitResult out;
  out.subset = std::move(subset);
  if (s2b < s2a) {
    out.cp = std::move(cand2);
    out.sigma1 = std::move(s1b);
    out.sigma2 = s2b;
    out.chosen = 2;
    out.sigma2_other = s2a;
  } else {
    out.cp = std::move(cand1);
    out.sigma1 = std::move(s1a);
    out.sigma2 = s2a;
    out.chosen = 1;
    out.sigma2_other = s2b;
  }
  return out;
}

void check_case_lists(const std::vector<Tensor>& x,
                      const std::vector<Tensor>& y) {
  if (x.size() != y.size())
    throw ShapeError("predictor and response case counts differ");
  if (y.empty()) throw ShapeError("no cases");
  for (std::size_t i = 1; i < y.size(); ++i) {
    if (!same_shape(x[i].shape(), x[0].shape()))
      throw ShapeError("predictor shapes differ across cases");
    if (!same_shape(y[i].shape(), y[0].shape()))
      throw ShapeError("response shapes differ across cases");
  }
}

}  // namespace

std::vector<Tensor> cell_residuals(const CpModel& cp,
                                   const std::vector<Tensor>& x_imp,
                                   const std::vector<Tensor>& y) {
  if (x_imp.size() != y.size())
    throw ShapeError("cell_residuals: predictor and response counts differ");
  std::vector<Tensor> res;
  res.reserve(y.size());
  for (std::size_t n = 0; n < y.size(); ++n) {
    if (!same_shape(x_imp[n].shape(), cp.pshape()) ||
        !same_shape(y[n].shape(), cp.qshape()))
      throw ShapeError("cell_residuals: case " + std::to_string(n) +
                       " does not match the model shapes");
    const Tensor fitted = cp_apply(cp, x_imp[n]);
    Tensor r = y[n];  // keeps the mask; NaN stays at missing cells
    for (std::size_t j = 0; j < r.size(); ++j) r[j] -= cp.b0[j] + fitted[j];
    res.push_back(std::move(r));
  }
  return res;
}

std::vector<double> case_deviations(const std::vector<Tensor>& residuals,
                                    const Tensor& sigma1, const Rho& rho1) {
  std::vector<double> t;
  t.reserve(residuals.size());
  for (const auto& r : residuals) {
    if (!same_shape(r.shape(), sigma1.shape()))
      throw ShapeError("case_deviations: residual/scale shape mismatch");
    double acc = 0.0;
    std::size_t mn = 0;
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (!r.observed(j)) continue;
      acc += cell_loss(rho1, r[j], sigma1[j]);
      ++mn;
    }
    t.push_back(mn == 0 ? kNan : std::sqrt(acc / static_cast<double>(mn)));
  }
  return t;
}

WeightSet build_weights(const std::vector<Tensor>& residuals,
                        const Tensor& sigma1, double sigma2,
                        const std::vector<int>& wx, const Rho& rho1,
                        const Rho& rho2) {
  if (wx.size() != residuals.size())
    throw ShapeError("build_weights: case weight count mismatch");
  const auto t = case_deviations(residuals, sigma1, rho1);
  return weights_given(residuals, t, sigma1, sigma2, wx, rho1, rho2);
}

double rotot_objective(const std::vector<Tensor>& x_imp,
                       const std::vector<Tensor>& y, const CpModel& cp,
                       const Tensor& sigma1, double sigma2,
                       const std::vector<int>& wx, double lambda,
                       const Rho& rho1, const Rho& rho2) {
  const std::size_t m = observed_total(y);
  if (m == 0) throw FitError("objective: no observed response cells");
  const auto res = cell_residuals(cp, x_imp, y);
  const auto t = case_deviations(res, sigma1, rho1);
  return objective_given(res, t, wx, sigma2, rho2, lambda, cp, m);
}

double stationarity_gap(const std::vector<Tensor>& x_imp,
                        const std::vector<Tensor>& y, const CpModel& cp,
                        const WeightSet& w, double lambda) {
  const std::size_t m = observed_total(y);
  const double coef = 4.0 * lambda * static_cast<double>(m);
  const auto res = cell_residuals(cp, x_imp, y);
  const std::size_t n = y.size();
  const std::size_t cells = shape_size(cp.qshape());

  // Weighted residual tensors, zero-filled at missing cells.
  std::vector<Tensor> rw;
  rw.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor t(cp.qshape(), 0.0);
    for (std::size_t j = 0; j < cells; ++j)
      if (res[i].observed(j)) t[j] = res[i][j] * w.total[i][j];
    rw.push_back(std::move(t));
  }

  double gap = 0.0;
  const int r = cp.rank();
  for (int l = 0; l < static_cast<int>(cp.u.size()); ++l) {
    Eigen::MatrixXd g = -coef * cp.u[static_cast<std::size_t>(l)] *
                        gram_except_u(cp, l);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::MatrixXd c = build_c_mat(x_imp[i], cp, l);
      const Eigen::Map<const Eigen::VectorXd> v(
          rw[i].values().data(), static_cast<Eigen::Index>(cells));
      const Eigen::VectorXd gv = c.transpose() * v;
      g += Eigen::Map<const Eigen::MatrixXd>(gv.data(), g.rows(), r);
    }
    gap = std::max(gap, g.cwiseAbs().maxCoeff());
  }
  const int nm = static_cast<int>(cp.v.size());
  for (int mm = 0; mm < nm; ++mm) {
    Eigen::MatrixXd g = -coef * cp.v[static_cast<std::size_t>(mm)] *
                        gram_except_v(cp, mm);
    std::vector<int> others;
    for (int q = 0; q < nm; ++q)
      if (q != mm) others.push_back(q);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::MatrixXd d = build_d_mat(x_imp[i], cp, mm);
      g += matricize(rw[i], {mm}, others) * d;
    }
    gap = std::max(gap, g.cwiseAbs().maxCoeff());
  }
  for (std::size_t j = 0; j < cells; ++j) {
    double g0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) g0 += rw[i][j];
    gap = std::max(gap, std::abs(g0));
  }
  return gap;
}

IrlsResult irls_fit(const std::vector<Tensor>& x_imp,
                    const std::vector<Tensor>& y, const std::vector<int>& wx,
                    CpModel start, const Tensor& sigma1, double sigma2,
                    double lambda, const RototConfig& cfg) {
  check_case_lists(x_imp, y);
  if (wx.size() != y.size())
    throw ShapeError("irls: case weight count mismatch");
  if (!same_shape(sigma1.shape(), y[0].shape()))
    throw ShapeError("irls: cell scale shape mismatch");
  return run_irls(x_imp, y, wx, std::move(start), sigma1, sigma2, cfg.rho1,
                  cfg.rho2, lambda, cfg);
}

DdcResult ddc_lite(const Eigen::MatrixXd& y) {
  const Eigen::Index n = y.rows();
  const Eigen::Index q = y.cols();
  if (n < 2 || q < 1)
    throw ShapeError("ddc_lite: need at least 2 rows and 1 column");

  std::vector<double> med(static_cast<std::size_t>(q), 0.0);
  std::vector<double> scale(static_cast<std::size_t>(q), 0.0);
  std::vector<double> col;
  for (Eigen::Index j = 0; j < q; ++j) {
    col.clear();
    for (Eigen::Index i = 0; i < n; ++i)
      if (!std::isnan(y(i, j))) col.push_back(y(i, j));
    if (col.empty()) continue;  // entirely missing column imputes to 0
    med[static_cast<std::size_t>(j)] = median(col);
    scale[static_cast<std::size_t>(j)] = mad_scale(col);
  }

  const double zcut = std::sqrt(chi2_quantile(1, 0.99));
  DdcResult out;
  out.flags = Eigen::MatrixXi::Zero(n, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const double s = scale[static_cast<std::size_t>(j)];
    if (s <= 0.0) continue;  // constant or empty column: nothing to flag
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = y(i, j);
      if (std::isnan(v)) continue;
      if (std::abs(v - med[static_cast<std::size_t>(j)]) / s > zcut)
        out.flags(i, j) = 1;
    }
  }

  // One predicting partner per column: the most rank-correlated other column
  // over rows where both are observed and unflagged, kept only when the
  // association is strong (|spearman| >= 0.5). First such column wins ties.
  std::vector<int> partner(static_cast<std::size_t>(q), -1);
  std::vector<double> pcorr(static_cast<std::size_t>(q), 0.0);
  std::vector<double> a, b;
  for (Eigen::Index j = 0; j < q; ++j) {
    if (scale[static_cast<std::size_t>(j)] <= 0.0) continue;
    double best = 0.0;
    int bestk = -1;
    for (Eigen::Index k = 0; k < q; ++k) {
      if (k == j || scale[static_cast<std::size_t>(k)] <= 0.0) continue;
      a.clear();
      b.clear();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::isnan(y(i, j)) || std::isnan(y(i, k))) continue;
        if (out.flags(i, j) || out.flags(i, k)) continue;
        a.push_back(y(i, j));
        b.push_back(y(i, k));
      }
      if (a.size() < 3) continue;
      const double s = spearman(a, b);
      if (std::abs(s) > std::abs(best)) {
        best = s;
        bestk = static_cast<int>(k);
      }
    }
    if (bestk >= 0 && std::abs(best) >= 0.5) {
      partner[static_cast<std::size_t>(j)] = bestk;
      pcorr[static_cast<std::size_t>(j)] = best;
    }
  }

  // Robust single-predictor imputation: align the partner's deviation from
  // its median by the scale ratio and the correlation sign; fall back to the
  // column median when no usable partner value exists.
  out.imputed = y;
  for (Eigen::Index j = 0; j < q; ++j) {
    const std::size_t ju = static_cast<std::size_t>(j);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!std::isnan(y(i, j)) && !out.flags(i, j)) continue;
      double v = med[ju];
      const int k = partner[ju];
      if (k >= 0) {
        const Eigen::Index ke = k;
        const std::size_t ku = static_cast<std::size_t>(k);
        if (!std::isnan(y(i, ke)) && !out.flags(i, ke))
          v = med[ju] + (pcorr[ju] > 0.0 ? 1.0 : -1.0) * scale[ju] /
                            scale[ku] * (y(i, ke) - med[ku]);
      }
      out.imputed(i, j) = v;
    }
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    int obs = 0, flagged = 0;
    for (Eigen::Index j = 0; j < q; ++j) {
      if (std::isnan(y(i, j))) continue;
      ++obs;
      flagged += out.flags(i, j);
    }
    if (obs > 0 && 4 * flagged > obs)
      out.case_flags.push_back(static_cast<int>(i));
  }
  return out;
}

InitBundle build_init_bundle(const std::vector<Tensor>& x,
                             const std::vector<Tensor>& y,
                             const RototConfig& cfg) {
  check_case_lists(x, y);
  const Shape ranks = cfg.x_ranks.empty() ? x[0].shape() : cfg.x_ranks;
  InitBundle b;
  b.rompca = rompca_fit(x, ranks, cfg.rompca);
  const std::size_t n = x.size();
  b.x_imp.reserve(n);
  b.wx.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    b.x_imp.push_back(rompca_impute(b.rompca, i));
    b.wx.push_back(rompca_case_weight(b.rompca, i));
  }
  ScreenedY s = screen_responses(y);
  b.ddc = std::move(s.ddc);
  b.y_ddc = std::move(s.y_ddc);
  return b;
}

InitResult initialize(const InitBundle& bundle, const std::vector<Tensor>& y,
                      int rank_r, double lambda, const RototConfig& cfg) {
  if (bundle.x_imp.size() != y.size())
    throw ShapeError("initialize: bundle and response counts differ");
  return init_core(bundle.x_imp, y, bundle.y_ddc, bundle.ddc, bundle.wx,
                   rank_r, lambda, cfg);
}

RototModel rotot_fit_bundled(const InitBundle& bundle,
                             const std::vector<Tensor>& y, int rank_r,
                             double lambda, const RototConfig& cfg) {
  if (bundle.x_imp.size() != y.size())
    throw ShapeError("fit: bundle and response counts differ");
  InitResult init = init_core(bundle.x_imp, y, bundle.y_ddc, bundle.ddc,
                              bundle.wx, rank_r, lambda, cfg);
  IrlsResult fit =
      run_irls(bundle.x_imp, y, bundle.wx, std::move(init.cp), init.sigma1,
               init.sigma2, cfg.rho1, cfg.rho2, lambda, cfg);
  RototModel m;
  m.cp = std::move(fit.cp);
  m.lambda = lambda;
  m.rank_r = rank_r;
  m.cell_scales = std::move(init.sigma1);
  m.case_scale = init.sigma2;
  m.rho1 = cfg.rho1;
  m.rho2 = cfg.rho2;
  m.rompca = bundle.rompca;
  m.objective_trace = std::move(fit.objective_trace);
  m.converged = fit.converged;
  m.iterations = fit.iterations;
  m.frozen_intercept_cells = fit.frozen_intercept_cells;
  m.init_candidate = init.chosen;
  return m;
}

RototModel rotot_fit(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
                     int rank_r, double lambda, const RototConfig& cfg) {
  const InitBundle bundle = build_init_bundle(x, y, cfg);
  return rotot_fit_bundled(bundle, y, rank_r, lambda, cfg);
}

CvResult cross_validate(const InitBundle& bundle, const std::vector<Tensor>& y,
                        const std::vector<int>& r_grid,
                        const std::vector<double>& lambda_grid,
                        const RototConfig& cfg) {
  if (bundle.x_imp.size() != y.size())
    throw ShapeError("cross_validate: bundle and response counts differ");
  const int k = cfg.cv_folds;
  if (k < 2) throw ShapeError("cross_validate: need at least 2 folds");
  if (r_grid.empty() || lambda_grid.empty())
    throw ShapeError("cross_validate: empty tuning grid");
  std::vector<int> rs = r_grid;
  std::sort(rs.begin(), rs.end());
  rs.erase(std::unique(rs.begin(), rs.end()), rs.end());
  if (rs.front() < 1) throw ShapeError("cross_validate: ranks must be >= 1");
  std::vector<double> ls = lambda_grid;
  std::sort(ls.begin(), ls.end());
  ls.erase(std::unique(ls.begin(), ls.end()), ls.end());
  if (ls.front() < 0.0)
    throw ShapeError("cross_validate: lambdas must be >= 0");

  std::vector<int> used;
  for (std::size_t i = 0; i < bundle.wx.size(); ++i)
    if (bundle.wx[i] == 1) used.push_back(static_cast<int>(i));
  if (static_cast<int>(used.size()) < k)
    throw FitError("cross_validate: fewer clean cases than folds");

  Rng rng(cfg.seed);
  shuffle(used, rng);

  Eigen::MatrixXd score = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(rs.size()), static_cast<Eigen::Index>(ls.size()));
  const std::size_t need =
      std::max<std::size_t>(static_cast<std::size_t>(rs.back()), 5);
  for (int f = 0; f < k; ++f) {
    std::vector<int> tr, va;
    for (std::size_t i = 0; i < used.size(); ++i)
      (static_cast<int>(i) % k == f ? va : tr).push_back(used[i]);
    std::sort(tr.begin(), tr.end());
    std::sort(va.begin(), va.end());
    // The screened 75% subset of the split must still cover the largest rank.
    if ((3 * tr.size() + 3) / 4 < need)
      throw FitError("cross_validate: fold " + std::to_string(f) +
                     " training split too small for the grid");

    std::vector<Tensor> x_tr, y_tr, x_va, y_va;
    for (int i : tr) {
      x_tr.push_back(bundle.x_imp[static_cast<std::size_t>(i)]);
      y_tr.push_back(y[static_cast<std::size_t>(i)]);
    }
    for (int i : va) {
      x_va.push_back(bundle.x_imp[static_cast<std::size_t>(i)]);
      y_va.push_back(y[static_cast<std::size_t>(i)]);
    }
    const ScreenedY s = screen_responses(y_tr);
    const std::vector<int> wx_tr(tr.size(), 1);

    for (std::size_t ri = 0; ri < rs.size(); ++ri) {
      for (std::size_t li = 0; li < ls.size(); ++li) {
        InitResult init = init_core(x_tr, y_tr, s.y_ddc, s.ddc, wx_tr, rs[ri],
                                    ls[li], cfg);
        IrlsResult fit =
            run_irls(x_tr, y_tr, wx_tr, std::move(init.cp), init.sigma1,
                     init.sigma2, cfg.rho1, cfg.rho2, ls[li], cfg);
        const auto res_v = cell_residuals(fit.cp, x_va, y_va);
        const auto t_v = case_deviations(res_v, init.sigma1, cfg.rho1);
        std::vector<double> finite;
        for (double v : t_v)
          if (!std::isnan(v)) finite.push_back(v);
        const double s2 = finite.empty() ? 0.0 : mscale(finite);
        score(static_cast<Eigen::Index>(ri), static_cast<Eigen::Index>(li)) +=
            s2;
      }
    }
  }
  score /= static_cast<double>(k);

  CvResult out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t ri = 0; ri < rs.size(); ++ri) {
    for (std::size_t li = 0; li < ls.size(); ++li) {
      const double v =
          score(static_cast<Eigen::Index>(ri), static_cast<Eigen::Index>(li));
      out.table.push_back({rs[ri], ls[li], v});
      if (v < best) {  // strict: ties keep the smaller rank, then lambda
        best = v;
        out.best_rank = rs[ri];
        out.best_lambda = ls[li];
      }
    }
  }
  return out;
}

Tensor rotot_predict(const RototModel& m, const Tensor& x_star) {
  if (!same_shape(x_star.shape(), m.cp.pshape()))
    throw ShapeError("predict: predictor shape mismatch");
  const RompcaProjection pr = rompca_project_new(m.rompca, x_star);
  const Tensor fitted = cp_apply(m.cp, pr.imputed);
  Tensor out = m.cp.b0;
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += fitted[j];
  return out;
}

}  // namespace rotot

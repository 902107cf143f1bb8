#include "rotot/rompca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rotot/errors.hpp"
#include "rotot/kernels.hpp"
#include "rotot/regression.hpp"
#include "rotot/stats.hpp"

namespace rotot {

namespace {

const Rho& loss() {
  static const Rho r = Rho::tanh_loss();
  return r;
}

// sigma^2 rho(r/sigma); an imploded scale (0) degrades to the quadratic limit.
double cell_term(double r, double s) {
  if (s <= 0.0) return 0.5 * r * r;
  return s * s * loss().rho(r / s);
}

double cell_w1(double r, double s) {
  if (s <= 0.0) return 1.0;
  return loss().weight(r / s);
}

double case_term(double t, double s2) {
  if (s2 <= 0.0) return 0.5 * t * t;
  return s2 * s2 * loss().rho(t / s2);
}

double case_w2(double t, double s2) {
  if (s2 <= 0.0) return 1.0;
  return loss().weight(t / s2);
}

// Design of the core fit: row p over predictor cells, column k over core
// cells, both with the first mode fastest; entry = prod_l proj[l](p_l, k_l).
// vec(center + [[core; proj]]) = vec(center) + design * vec(core).
Eigen::MatrixXd kron_design_except(const std::vector<Eigen::MatrixXd>& proj,
                                   int skip) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Ones(1, 1);
  for (int l = 0; l < static_cast<int>(proj.size()); ++l) {
    if (l == skip) continue;
    const Eigen::MatrixXd& v = proj[l];
    Eigen::MatrixXd next(g.rows() * v.rows(), g.cols() * v.cols());
    for (Eigen::Index p = 0; p < v.rows(); ++p)
      for (Eigen::Index k = 0; k < v.cols(); ++k)
        next.block(p * g.rows(), k * g.cols(), g.rows(), g.cols()) =
            v(p, k) * g;
    g = std::move(next);
  }
  return g;
}

Eigen::MatrixXd kron_design(const std::vector<Eigen::MatrixXd>& proj) {
  return kron_design_except(proj, -1);
}

// t x_mode a (mode product); shape[mode] becomes a.rows().
Tensor mode_multiply(const Tensor& t, int mode, const Eigen::MatrixXd& a) {
  std::vector<int> rest;
  for (int i = 0; i < t.order(); ++i)
    if (i != mode) rest.push_back(i);
  const Eigen::MatrixXd prod = a * matricize(t, {mode}, rest);
  Shape ns = t.shape();
  ns[mode] = static_cast<int>(a.rows());
  return dematricize(prod, ns, {mode}, rest);
}

Eigen::VectorXd core_vec(const Tensor& core) {
  return Eigen::Map<const Eigen::VectorXd>(
      core.values().data(), static_cast<Eigen::Index>(core.size()));
}

// Deviation t of one case: sqrt of the mean sigma^2 rho1(r/sigma) over its
// observed cells.
double deviation(const Tensor& x, const Eigen::VectorXd& recon,
                 const Tensor& scales) {
  double acc = 0.0;
  int mn = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!x.observed(j)) continue;
    ++mn;
    acc += cell_term(x.values()[j] - recon[static_cast<Eigen::Index>(j)],
                     scales.values()[j]);
  }
  return mn > 0 ? std::sqrt(acc / mn) : 0.0;
}

struct CoreResult {
  Tensor core;
  Tensor weights;  // w1 * mask
  Tensor imputed;  // complete
  double t = 0.0;
};

// IRLS over the core only, center/projections/scales fixed. Starts from the
// mask-weighted least-squares core, hardened by trimmed refits on the 75%
// best-standardized cells so a few wild cells cannot drag the start into a
// bad basin. Fully deterministic: the training polish reuses this routine,
// which is what makes projecting a training tensor reproduce its stored core.
CoreResult core_irls(const Tensor& x, const Tensor& center,
                     const Eigen::MatrixXd& design, const Tensor& scales,
                     const Shape& kshape, const RompcaConfig& cfg) {
  const std::size_t cells = x.size();
  if (x.observed_count() == 0)
    throw FitError("rompca: tensor with no observed cell cannot be projected");
  const Eigen::Index dim = design.cols();

  auto solve_with = [&](const std::vector<double>& w) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
    for (std::size_t j = 0; j < cells; ++j) {
      if (w[j] == 0.0) continue;
      const Eigen::Index jj = static_cast<Eigen::Index>(j);
      a.noalias() += w[j] * (design.row(jj).transpose() * design.row(jj));
      b.noalias() += (w[j] * (x.values()[j] - center.values()[j])) *
                     design.row(jj).transpose();
    }
    return pinv_solve(a, b, cfg.pinv_rel_tol);
  };
  auto inner_objective = [&](const Eigen::VectorXd& recon) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cells; ++j)
      if (x.observed(j))
        acc += cell_term(x.values()[j] - recon[static_cast<Eigen::Index>(j)],
                         scales.values()[j]);
    return acc;
  };

  std::vector<double> w(cells, 0.0);
  for (std::size_t j = 0; j < cells; ++j) w[j] = x.observed(j) ? 1.0 : 0.0;
  Eigen::VectorXd u = solve_with(w);
  Eigen::VectorXd recon =
      Eigen::Map<const Eigen::VectorXd>(center.values().data(),
                                        static_cast<Eigen::Index>(cells)) +
      design * u;

  if (cfg.core_max_iter > 0) {
    // Concentration steps: refit on the h best cells by |r|/sigma1 until the
    // kept set stops moving. A zero-scale cell counts as perfectly fit only
    // when its residual is exactly zero, matching the quadratic limit.
    std::vector<std::size_t> obs;
    for (std::size_t j = 0; j < cells; ++j)
      if (x.observed(j)) obs.push_back(j);
    const std::size_t mn = obs.size();
    const std::size_t keep =
        std::max((3 * mn + 3) / 4,
                 std::min(mn, static_cast<std::size_t>(dim)));
    std::vector<std::size_t> kept_prev;
    for (int it = 0; it < 30; ++it) {
      std::vector<std::pair<double, std::size_t>> score;
      score.reserve(mn);
      for (std::size_t j : obs) {
        const double r =
            x.values()[j] - recon[static_cast<Eigen::Index>(j)];
        const double s = scales.values()[j];
        const double eta =
            s > 0.0 ? std::abs(r) / s
                    : (r == 0.0 ? 0.0
                                : std::numeric_limits<double>::infinity());
        score.emplace_back(eta, j);
      }
      std::stable_sort(score.begin(), score.end(),
                       [](const auto& a, const auto& b) {
                         return a.first < b.first;
                       });
      std::vector<std::size_t> kept;
      kept.reserve(keep);
      for (std::size_t i = 0; i < keep; ++i) kept.push_back(score[i].second);
      std::sort(kept.begin(), kept.end());
      if (kept == kept_prev) break;
      kept_prev = kept;
      std::fill(w.begin(), w.end(), 0.0);
      for (std::size_t j : kept) w[j] = 1.0;
      u = solve_with(w);
      recon = Eigen::Map<const Eigen::VectorXd>(
                  center.values().data(), static_cast<Eigen::Index>(cells)) +
              design * u;
    }
  }

  double prev = inner_objective(recon);
  for (int it = 0; it < cfg.core_max_iter; ++it) {
    for (std::size_t j = 0; j < cells; ++j)
      w[j] = x.observed(j)
                 ? cell_w1(x.values()[j] - recon[static_cast<Eigen::Index>(j)],
                           scales.values()[j])
                 : 0.0;
    u = solve_with(w);
    recon = Eigen::Map<const Eigen::VectorXd>(
                center.values().data(), static_cast<Eigen::Index>(cells)) +
            design * u;
    const double cur = inner_objective(recon);
    const double rel = (prev - cur) / std::max(prev, 1e-300);
    prev = cur;
    if (std::abs(rel) <= cfg.core_tol) break;
  }

  CoreResult out;
  out.core = Tensor(kshape, 0.0);
  for (std::size_t k = 0; k < out.core.size(); ++k)
    out.core.values()[k] = u[static_cast<Eigen::Index>(k)];
  out.weights = Tensor(x.shape(), 0.0);
  out.imputed = Tensor(x.shape(), 0.0);
  int mn = 0;
  double acc = 0.0;
  for (std::size_t j = 0; j < cells; ++j) {
    const double rc = recon[static_cast<Eigen::Index>(j)];
    if (!x.observed(j)) {
      out.imputed.values()[j] = rc;
      continue;
    }
    const double r = x.values()[j] - rc;
    const double wj = cell_w1(r, scales.values()[j]);
    out.weights.values()[j] = wj;
    out.imputed.values()[j] = rc + wj * r;
    acc += cell_term(r, scales.values()[j]);
    ++mn;
  }
  out.t = std::sqrt(acc / mn);
  return out;
}

// Largest-|entry| coordinate made positive, so eigenvector signs are
// reproducible.
void fix_column_signs(Eigen::MatrixXd& v) {
  for (Eigen::Index k = 0; k < v.cols(); ++k) {
    Eigen::Index imax = 0;
    v.col(k).cwiseAbs().maxCoeff(&imax);
    if (v(imax, k) < 0.0) v.col(k) = -v.col(k);
  }
}

double objective_value(const std::vector<Tensor>& x, const Tensor& center,
                       const Eigen::MatrixXd& design,
                       const std::vector<Tensor>& cores, const Tensor& scales,
                       double s2) {
  double total = 0.0;
  std::size_t m_total = 0;
  const Eigen::Map<const Eigen::VectorXd> cvec(
      center.values().data(), static_cast<Eigen::Index>(center.size()));
  for (std::size_t n = 0; n < x.size(); ++n) {
    const Eigen::VectorXd recon = cvec + design * core_vec(cores[n]);
    const std::size_t mn = x[n].observed_count();
    total += static_cast<double>(mn) *
             case_term(deviation(x[n], recon, scales), s2);
    m_total += mn;
  }
  return total / static_cast<double>(m_total);
}

}  // namespace

Shape RompcaModel::kshape() const {
  Shape ks;
  for (const auto& v : proj) ks.push_back(static_cast<int>(v.cols()));
  return ks;
}

RompcaModel rompca_fit(const std::vector<Tensor>& x, const Shape& ranks,
                       const RompcaConfig& cfg) {
  const std::size_t N = x.size();
  if (N < 2) throw ShapeError("rompca: need at least two cases");
  const Shape ps = x[0].shape();
  if (ps.empty()) throw ShapeError("rompca: order-0 predictors not supported");
  for (std::size_t n = 1; n < N; ++n)
    if (x[n].shape() != ps)
      throw ShapeError("rompca: case " + std::to_string(n) +
                       " has inconsistent shape");
  const int L = static_cast<int>(ps.size());
  if (static_cast<int>(ranks.size()) != L)
    throw ShapeError("rompca: rank list must have one entry per mode");
  for (int l = 0; l < L; ++l)
    if (ranks[l] < 1 || ranks[l] > ps[l])
      throw ShapeError("rompca: rank " + std::to_string(ranks[l]) +
                       " invalid for mode of size " + std::to_string(ps[l]));
  const std::size_t cells = shape_size(ps);
  for (std::size_t j = 0; j < cells; ++j) {
    bool any = false;
    for (std::size_t n = 0; n < N && !any; ++n) any = x[n].observed(j);
    if (!any)
      throw FitError("rompca: cell " + std::to_string(j) +
                     " is missing in every case");
  }

  RompcaModel m;
  m.cfg = cfg;

  // Robust starting point: elementwise median center, then projections from
  // the centered data with each cell clipped at 3 robust scales (so single
  // wild cells cannot steer the singular vectors) and missing cells at 0.
  m.center = Tensor(ps, 0.0);
  std::vector<double> clip(cells, 0.0);
  {
    std::vector<double> vals;
    for (std::size_t j = 0; j < cells; ++j) {
      vals.clear();
      for (std::size_t n = 0; n < N; ++n)
        if (x[n].observed(j)) vals.push_back(x[n].values()[j]);
      m.center.values()[j] = median(vals);
      for (double& v : vals) v -= m.center.values()[j];
      clip[j] = 3.0 * mad_scale(vals);
    }
  }
  std::vector<Tensor> z;
  z.reserve(N);
  for (std::size_t n = 0; n < N; ++n) {
    Tensor zn(ps, 0.0);
    for (std::size_t j = 0; j < cells; ++j) {
      if (!x[n].observed(j)) continue;
      double d = x[n].values()[j] - m.center.values()[j];
      if (clip[j] > 0.0) d = std::clamp(d, -clip[j], clip[j]);
      zn.values()[j] = d;
    }
    z.push_back(std::move(zn));
  }
  for (int l = 0; l < L; ++l) {
    std::vector<int> rest;
    for (int i = 0; i < L; ++i)
      if (i != l) rest.push_back(i);
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(ps[l], ps[l]);
    for (std::size_t n = 0; n < N; ++n) {
      const Eigen::MatrixXd zm = matricize(z[n], {l}, rest);
      scatter.noalias() += zm * zm.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scatter);
    Eigen::MatrixXd v(ps[l], ranks[l]);
    for (int k = 0; k < ranks[l]; ++k)
      v.col(k) = es.eigenvectors().col(ps[l] - 1 - k);
    fix_column_signs(v);
    m.proj.push_back(std::move(v));
  }
  const Shape kshape = ranks;

  // Initial cores by mask-weighted least squares, then the scales: per-cell
  // M-scales of the starting residuals and the case scale from the starting
  // deviations. Both stay fixed for the rest of the fit.
  Eigen::MatrixXd design = kron_design(m.proj);
  m.cores.assign(N, Tensor(kshape, 0.0));
  std::vector<Eigen::VectorXd> recon(N);
  {
    RompcaConfig init_cfg = cfg;
    init_cfg.core_max_iter = 0;  // plain weighted LS, no reweighting yet
    Tensor unit_scales(ps, 1.0);
    for (std::size_t n = 0; n < N; ++n) {
      const CoreResult cr =
          core_irls(x[n], m.center, design, unit_scales, kshape, init_cfg);
      m.cores[n] = cr.core;
      recon[n] = Eigen::Map<const Eigen::VectorXd>(
                     m.center.values().data(),
                     static_cast<Eigen::Index>(cells)) +
                 design * core_vec(cr.core);
    }
  }
  m.cell_scales = Tensor(ps, 0.0);
  {
    std::vector<double> vals;
    for (std::size_t j = 0; j < cells; ++j) {
      vals.clear();
      for (std::size_t n = 0; n < N; ++n)
        if (x[n].observed(j))
          vals.push_back(x[n].values()[j] -
                         recon[n][static_cast<Eigen::Index>(j)]);
      m.cell_scales.values()[j] = mscale(vals);
    }
    std::vector<double> devs(N, 0.0);
    for (std::size_t n = 0; n < N; ++n)
      devs[n] = deviation(x[n], recon[n], m.cell_scales);
    m.case_scale = mscale(devs);
  }

  m.objective_trace.push_back(
      objective_value(x, m.center, design, m.cores, m.cell_scales,
                      m.case_scale));

  // IRLS sweeps: freeze the weights at the sweep start, then exact weighted
  // least-squares updates of cores, projections (rows decouple; QR afterwards
  // restores orthonormality while the R factor is pushed into the cores, so
  // reconstructions are untouched) and center.
  std::vector<Tensor> omega(N, Tensor(ps, 0.0));
  for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    for (std::size_t n = 0; n < N; ++n) {
      const Eigen::VectorXd rc = Eigen::Map<const Eigen::VectorXd>(
                                     m.center.values().data(),
                                     static_cast<Eigen::Index>(cells)) +
                                 design * core_vec(m.cores[n]);
      const double w2 = case_w2(deviation(x[n], rc, m.cell_scales),
                                m.case_scale);
      for (std::size_t j = 0; j < cells; ++j)
        omega[n].values()[j] =
            x[n].observed(j)
                ? w2 * cell_w1(x[n].values()[j] -
                                   rc[static_cast<Eigen::Index>(j)],
                               m.cell_scales.values()[j])
                : 0.0;
    }

    for (std::size_t n = 0; n < N; ++n) {
      const Eigen::Index dim = design.cols();
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
      Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
      for (std::size_t j = 0; j < cells; ++j) {
        const double wj = omega[n].values()[j];
        if (wj == 0.0) continue;
        const Eigen::Index jj = static_cast<Eigen::Index>(j);
        a.noalias() += wj * (design.row(jj).transpose() * design.row(jj));
        b.noalias() += (wj * (x[n].values()[j] - m.center.values()[j])) *
                       design.row(jj).transpose();
      }
      const Eigen::VectorXd u = pinv_solve(a, b, cfg.pinv_rel_tol);
      for (std::size_t k = 0; k < m.cores[n].size(); ++k)
        m.cores[n].values()[k] = u[static_cast<Eigen::Index>(k)];
    }

    for (int l = 0; l < L; ++l) {
      const int pl = ps[l];
      const int kl = kshape[l];
      std::int64_t inner = 1;
      for (int i = 0; i < l; ++i) inner *= ps[i];
      const Eigen::MatrixXd west = kron_design_except(m.proj, l);
      std::vector<int> rest;
      for (int i = 0; i < L; ++i)
        if (i != l) rest.push_back(i);
      std::vector<Eigen::MatrixXd> lhs(pl, Eigen::MatrixXd::Zero(kl, kl));
      std::vector<Eigen::VectorXd> rhs(pl, Eigen::VectorXd::Zero(kl));
      for (std::size_t n = 0; n < N; ++n) {
        const Eigen::MatrixXd f =
            matricize(m.cores[n], {l}, rest) * west.transpose();  // kl x restP
        for (std::size_t j = 0; j < cells; ++j) {
          const double wj = omega[n].values()[j];
          if (wj == 0.0) continue;
          const std::int64_t pre = static_cast<std::int64_t>(j) % inner;
          const std::int64_t rem = static_cast<std::int64_t>(j) / inner;
          const int p = static_cast<int>(rem % pl);
          const std::int64_t rst = pre + inner * (rem / pl);
          const Eigen::VectorXd fc = f.col(rst);
          lhs[p].noalias() += wj * (fc * fc.transpose());
          rhs[p].noalias() +=
              (wj * (x[n].values()[j] - m.center.values()[j])) * fc;
        }
      }
      Eigen::MatrixXd vnew(pl, kl);
      for (int p = 0; p < pl; ++p)
        vnew.row(p) = pinv_solve(lhs[p], rhs[p], cfg.pinv_rel_tol).transpose();
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(vnew);
      Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(pl, kl);
      Eigen::MatrixXd r = qr.matrixQR()
                              .topLeftCorner(kl, kl)
                              .triangularView<Eigen::Upper>();
      for (int k = 0; k < kl; ++k)
        if (r(k, k) < 0.0) {
          q.col(k) = -q.col(k);
          r.row(k) = -r.row(k);
        }
      m.proj[l] = q;
      for (std::size_t n = 0; n < N; ++n)
        m.cores[n] = mode_multiply(m.cores[n], l, r);
      design = kron_design(m.proj);
    }

    {
      std::vector<double> num(cells, 0.0), den(cells, 0.0);
      for (std::size_t n = 0; n < N; ++n) {
        const Eigen::VectorXd fit = design * core_vec(m.cores[n]);
        for (std::size_t j = 0; j < cells; ++j) {
          const double wj = omega[n].values()[j];
          if (wj == 0.0) continue;
          num[j] += wj * (x[n].values()[j] - fit[static_cast<Eigen::Index>(j)]);
          den[j] += wj;
        }
      }
      for (std::size_t j = 0; j < cells; ++j)
        if (den[j] > 0.0) m.center.values()[j] = num[j] / den[j];
    }

    const double cur = objective_value(x, m.center, design, m.cores,
                                       m.cell_scales, m.case_scale);
    const double prev = m.objective_trace.back();
    m.objective_trace.push_back(cur);
    m.sweeps = sweep + 1;
    if ((prev - cur) / std::max(prev, 1e-300) <= cfg.tol) {
      m.converged = true;
      break;
    }
  }

  // Per-case polish through the shared core routine, then the casewise
  // outputs. The polished cores are what project_new reproduces.
  m.cell_weights.assign(N, Tensor());
  m.imputed.assign(N, Tensor());
  m.case_t.assign(N, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    CoreResult cr =
        core_irls(x[n], m.center, design, m.cell_scales, kshape, cfg);
    m.cores[n] = std::move(cr.core);
    m.cell_weights[n] = std::move(cr.weights);
    m.imputed[n] = std::move(cr.imputed);
    m.case_t[n] = cr.t;
  }

  const double reject = loss().tanh_params.c;
  m.w_case.assign(N, 1);
  for (std::size_t n = 0; n < N; ++n)
    m.w_case[n] = (m.case_scale > 0.0)
                      ? (m.case_t[n] / m.case_scale < reject ? 1 : 0)
                      : (m.case_t[n] == 0.0 ? 1 : 0);

  const std::size_t kcells = shape_size(kshape);
  Eigen::MatrixXd core_rows(static_cast<Eigen::Index>(N),
                            static_cast<Eigen::Index>(kcells));
  for (std::size_t n = 0; n < N; ++n)
    core_rows.row(static_cast<Eigen::Index>(n)) =
        core_vec(m.cores[n]).transpose();
  m.core_cov = mrcd_lite(core_rows);
  m.c_u = std::sqrt(chi2_quantile(static_cast<int>(kcells), 0.99));
  m.sd.assign(N, 0.0);
  m.w_u.assign(N, 1);
  m.case_weight.assign(N, 1);
  for (std::size_t n = 0; n < N; ++n) {
    m.sd[n] = score_distance(m, m.cores[n]);
    m.w_u[n] = m.sd[n] <= m.c_u ? 1 : 0;
    m.case_weight[n] = m.w_case[n] * m.w_u[n];
  }
  return m;
}

Tensor rompca_reconstruct(const RompcaModel& m, std::size_t n) {
  if (n >= m.cores.size()) throw ShapeError("rompca: case index out of range");
  Tensor out = kruskal_full(m.cores[n], m.proj);
  for (std::size_t j = 0; j < out.size(); ++j)
    out.values()[j] += m.center.values()[j];
  return out;
}

Tensor rompca_impute(const RompcaModel& m, std::size_t n) {
  if (n >= m.imputed.size())
    throw ShapeError("rompca: case index out of range");
  return m.imputed[n];
}

int rompca_case_weight(const RompcaModel& m, std::size_t n) {
  if (n >= m.case_weight.size())
    throw ShapeError("rompca: case index out of range");
  return m.case_weight[n];
}

double score_distance(const RompcaModel& m, const Tensor& core) {
  if (core.shape() != m.kshape())
    throw ShapeError("score_distance: core shape mismatch");
  const Eigen::VectorXd u = core_vec(core);
  const double q = u.dot(m.core_cov.ldlt().solve(u));
  return std::sqrt(std::max(q, 0.0));
}

Eigen::MatrixXd mrcd_lite(const Eigen::MatrixXd& rows, const MrcdConfig& cfg) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index p = rows.cols();
  if (n < 2 || p < 1) throw ShapeError("mrcd: need at least two rows");

  std::vector<double> med(p), scl(p);
  std::vector<double> col(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < n; ++i)
      col[static_cast<std::size_t>(i)] = rows(i, j);
    med[static_cast<std::size_t>(j)] = median(col);
    scl[static_cast<std::size_t>(j)] = mad_scale(col);
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, Eigen::Index>> order;
  order.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double dev = rows(i, j) - med[static_cast<std::size_t>(j)];
      const double s = scl[static_cast<std::size_t>(j)];
      if (s > 0.0)
        acc += (dev / s) * (dev / s);
      else if (dev != 0.0)
        acc = inf;
      if (!std::isfinite(acc)) {
        acc = inf;
        break;
      }
    }
    order.emplace_back(acc, i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  const Eigen::Index h = static_cast<Eigen::Index>(
      std::ceil(cfg.subset_fraction * static_cast<double>(n)));

  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(p);
  for (Eigen::Index i = 0; i < h; ++i) mean += rows.row(order[i].second);
  mean /= static_cast<double>(h);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < h; ++i) {
    const Eigen::RowVectorXd d = rows.row(order[i].second) - mean;
    s.noalias() += d.transpose() * d;
  }
  s /= static_cast<double>(h);

  // The central-subset covariance underestimates the true one; dividing by
  // F_{chi2_{p+2}}(q_alpha)/alpha restores consistency at the normal model.
  const double alpha = static_cast<double>(h) / static_cast<double>(n);
  if (alpha < 1.0) {
    const double q = chi2_quantile(static_cast<int>(p), alpha);
    s *= alpha / chi2_cdf(static_cast<int>(p) + 2, q);
  }

  const double target = std::max(s.trace() / static_cast<double>(p), 1e-12);
  const double shrink[] = {0.0, 0.01, 0.05, 0.1, 0.25};
  for (double rho : shrink) {
    const Eigen::MatrixXd t =
        (1.0 - rho) * s +
        rho * target * Eigen::MatrixXd::Identity(p, p);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo > 0.0 && hi / lo <= cfg.cond_cap) return t;
  }
  return target * Eigen::MatrixXd::Identity(p, p);
}

RompcaProjection rompca_project_new(const RompcaModel& m,
                                    const Tensor& x_star) {
  if (x_star.shape() != m.pshape())
    throw ShapeError("rompca: new tensor shape " + shape_str(x_star.shape()) +
                     " does not match training shape " +
                     shape_str(m.pshape()));
  const Eigen::MatrixXd design = kron_design(m.proj);
  CoreResult cr =
      core_irls(x_star, m.center, design, m.cell_scales, m.kshape(), m.cfg);
  RompcaProjection out;
  out.t = cr.t;
  out.core = std::move(cr.core);
  out.imputed = std::move(cr.imputed);
  out.cell_weights = std::move(cr.weights);
  out.sd = score_distance(m, out.core);
  return out;
}

double rompca_objective(const RompcaModel& m, const std::vector<Tensor>& x) {
  return objective_value(x, m.center, kron_design(m.proj), m.cores,
                         m.cell_scales, m.case_scale);
}

}  // namespace rotot

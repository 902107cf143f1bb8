#include "rotot/regression.hpp"

#include <cmath>
#include <cstdint>

#include "rotot/errors.hpp"

namespace rotot {

namespace {

// Contracts one mode of a dense buffer with a vector, removing that mode.
void contract_mode(std::vector<double>& buf, Shape& dims, int mode,
                   const Eigen::VectorXd& vec) {
  std::int64_t inner = 1;
  for (int i = 0; i < mode; ++i) inner *= dims[i];
  const std::int64_t n = dims[mode];
  std::int64_t outer = 1;
  for (int i = mode + 1; i < static_cast<int>(dims.size()); ++i)
    outer *= dims[i];
  std::vector<double> out(static_cast<std::size_t>(inner * outer), 0.0);
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t k = 0; k < n; ++k) {
      const double vk = vec[k];
      if (vk == 0.0) continue;
      const std::int64_t src = inner * (k + n * o);
      const std::int64_t dst = inner * o;
      for (std::int64_t i = 0; i < inner; ++i) out[dst + i] += vk * buf[src + i];
    }
  buf = std::move(out);
  dims.erase(dims.begin() + mode);
}

// x contracted with u-columns of every predictor mode except `keep`
// (keep = -1 contracts everything, leaving a scalar). Result for keep >= 0 is
// the length-P_keep vector of the design tensor.
Eigen::VectorXd contract_except(const Tensor& x, const CpModel& m, int keep,
                                int r) {
  std::vector<double> buf = x.values();
  Shape dims = x.shape();
  const int L = static_cast<int>(m.u.size());
  for (int l = 0; l < L; ++l) {
    if (l == keep) continue;
    const int pos = (keep >= 0 && keep < l) ? 1 : 0;
    contract_mode(buf, dims, pos, m.u[l].col(r));
  }
  return Eigen::Map<const Eigen::VectorXd>(buf.data(),
                                           static_cast<Eigen::Index>(buf.size()));
}

// Row q of the result is the elementwise product of the factor rows picked by
// the multi-index of q over the listed response modes (first mode fastest).
Eigen::MatrixXd response_rows_except(const CpModel& m, int skip) {
  const int R = m.rank();
  Eigen::MatrixXd g = Eigen::MatrixXd::Ones(1, R);
  for (int mm = 0; mm < static_cast<int>(m.v.size()); ++mm) {
    if (mm == skip) continue;
    const Eigen::MatrixXd& vm = m.v[mm];
    Eigen::MatrixXd next(g.rows() * vm.rows(), R);
    for (Eigen::Index j = 0; j < vm.rows(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        next.row(i + g.rows() * j) = g.row(i).cwiseProduct(vm.row(j));
    g = std::move(next);
  }
  return g;
}

}  // namespace

int CpModel::rank() const {
  if (!u.empty()) return static_cast<int>(u[0].cols());
  if (!v.empty()) return static_cast<int>(v[0].cols());
  return 0;
}

Shape CpModel::pshape() const {
  Shape s;
  for (const auto& f : u) s.push_back(static_cast<int>(f.rows()));
  return s;
}

Shape CpModel::qshape() const {
  Shape s;
  for (const auto& f : v) s.push_back(static_cast<int>(f.rows()));
  return s;
}

CpModel make_cp_model(const Shape& pshape, const Shape& qshape, int rank) {
  if (rank < 1) throw ShapeError("cp model rank must be >= 1");
  if (pshape.empty() || qshape.empty())
    throw ShapeError("cp model needs at least one predictor and response mode");
  CpModel m;
  m.b0 = Tensor(qshape, 0.0);
  for (int p : pshape) m.u.push_back(Eigen::MatrixXd::Zero(p, rank));
  for (int q : qshape) m.v.push_back(Eigen::MatrixXd::Zero(q, rank));
  return m;
}

Tensor cp_slope_full(const CpModel& m) {
  std::vector<Eigen::MatrixXd> factors = m.u;
  factors.insert(factors.end(), m.v.begin(), m.v.end());
  return kruskal_full(factors);
}

double cp_slope_norm_sq(const CpModel& m) {
  const int R = m.rank();
  Eigen::MatrixXd t = Eigen::MatrixXd::Ones(R, R);
  for (const auto& f : m.u) t = t.cwiseProduct(f.transpose() * f).eval();
  for (const auto& f : m.v) t = t.cwiseProduct(f.transpose() * f).eval();
  return t.sum();
}

Tensor cp_apply(const CpModel& m, const Tensor& x) {
  if (x.shape() != m.pshape())
    throw ShapeError("cp_apply: predictor shape " + shape_str(x.shape()) +
                     " does not match model " + shape_str(m.pshape()));
  const int R = m.rank();
  Eigen::VectorXd a(R);
  for (int r = 0; r < R; ++r) a[r] = contract_except(x, m, -1, r)[0];
  const Eigen::MatrixXd g = response_rows_except(m, -1);
  Tensor out(m.qshape(), 0.0);
  Eigen::Map<Eigen::VectorXd>(out.values().data(),
                              static_cast<Eigen::Index>(out.size())) = g * a;
  return out;
}

Eigen::MatrixXd gram_except_u(const CpModel& m, int l) {
  const int R = m.rank();
  Eigen::MatrixXd t = Eigen::MatrixXd::Ones(R, R);
  for (int ll = 0; ll < static_cast<int>(m.u.size()); ++ll)
    if (ll != l) t = t.cwiseProduct(m.u[ll].transpose() * m.u[ll]).eval();
  for (const auto& f : m.v) t = t.cwiseProduct(f.transpose() * f).eval();
  return t;
}

Eigen::MatrixXd gram_except_v(const CpModel& m, int mmode) {
  const int R = m.rank();
  Eigen::MatrixXd t = Eigen::MatrixXd::Ones(R, R);
  for (const auto& f : m.u) t = t.cwiseProduct(f.transpose() * f).eval();
  for (int mm = 0; mm < static_cast<int>(m.v.size()); ++mm)
    if (mm != mmode) t = t.cwiseProduct(m.v[mm].transpose() * m.v[mm]).eval();
  return t;
}

Eigen::MatrixXd build_c_mat(const Tensor& x, const CpModel& m, int l) {
  const int R = m.rank();
  const int P = m.pshape()[l];
  const Eigen::MatrixXd g = response_rows_except(m, -1);
  const Eigen::Index Q = g.rows();
  Eigen::MatrixXd c(Q, static_cast<Eigen::Index>(P) * R);
  for (int r = 0; r < R; ++r) {
    const Eigen::VectorXd a = contract_except(x, m, l, r);
    for (int p = 0; p < P; ++p) c.col(p + P * r) = a[p] * g.col(r);
  }
  return c;
}

Tensor build_c(const Tensor& x, const CpModel& m, int l) {
  const Eigen::MatrixXd cmat = build_c_mat(x, m, l);
  Shape shape{m.pshape()[l], m.rank()};
  const Shape qs = m.qshape();
  shape.insert(shape.end(), qs.begin(), qs.end());
  Tensor out(shape, 0.0);
  // cmat is (cells x P*R) with the (p, r) pair fastest in the output layout.
  const Eigen::Index cols = cmat.cols();
  for (Eigen::Index q = 0; q < cmat.rows(); ++q)
    for (Eigen::Index j = 0; j < cols; ++j)
      out.values()[static_cast<std::size_t>(j + cols * q)] = cmat(q, j);
  return out;
}

Eigen::MatrixXd build_d_mat(const Tensor& x, const CpModel& m, int mmode) {
  const int R = m.rank();
  Eigen::VectorXd a(R);
  for (int r = 0; r < R; ++r) a[r] = contract_except(x, m, -1, r)[0];
  Eigen::MatrixXd g = response_rows_except(m, mmode);
  for (int r = 0; r < R; ++r) g.col(r) *= a[r];
  return g;
}

Tensor build_d(const Tensor& x, const CpModel& m, int mmode) {
  const Eigen::MatrixXd dmat = build_d_mat(x, m, mmode);
  const int R = m.rank();
  Shape shape = m.qshape();
  shape[mmode] = R;
  std::int64_t inner = 1;
  for (int i = 0; i < mmode; ++i) inner *= shape[i];
  const std::int64_t post = dmat.rows() / inner;
  Tensor out(shape, 0.0);
  for (std::int64_t o = 0; o < post; ++o)
    for (int r = 0; r < R; ++r)
      for (std::int64_t i = 0; i < inner; ++i)
        out.values()[static_cast<std::size_t>(i + inner * (r + R * o))] =
            dmat(i + inner * o, r);
  return out;
}

Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                           double rel_tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double cutoff = rel_tol * std::max(ev.cwiseAbs().maxCoeff(), 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > cutoff) inv[i] = 1.0 / ev[i];
  return es.eigenvectors() *
         (inv.asDiagonal() * (es.eigenvectors().transpose() * b));
}

void update_u(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
              const std::vector<Tensor>& w, CpModel& m, int l, double penalty,
              double rel_tol) {
  const int R = m.rank();
  const int P = m.pshape()[l];
  const Eigen::Index dim = static_cast<Eigen::Index>(P) * R;
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const Eigen::MatrixXd cmat = build_c_mat(x[n], m, l);
    for (Eigen::Index q = 0; q < cmat.rows(); ++q) {
      const double wq = w[n].values()[static_cast<std::size_t>(q)];
      if (wq == 0.0) continue;
      const double resid = y[n].values()[static_cast<std::size_t>(q)] -
                           m.b0.values()[static_cast<std::size_t>(q)];
      lhs.noalias() += wq * (cmat.row(q).transpose() * cmat.row(q));
      rhs.noalias() += (wq * resid) * cmat.row(q).transpose();
    }
  }
  const Eigen::MatrixXd t = gram_except_u(m, l);
  for (int r = 0; r < R; ++r)
    for (int s = 0; s < R; ++s)
      for (int p = 0; p < P; ++p)
        lhs(p + P * r, p + P * s) += penalty * t(r, s);
  const Eigen::VectorXd sol = pinv_solve(lhs, rhs, rel_tol);
  m.u[l] = Eigen::Map<const Eigen::MatrixXd>(sol.data(), P, R);
}

void update_v(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
              const std::vector<Tensor>& w, CpModel& m, int mmode,
              double penalty, double rel_tol) {
  const int R = m.rank();
  const Shape qs = m.qshape();
  const int Qm = qs[mmode];
  std::int64_t inner = 1;
  for (int i = 0; i < mmode; ++i) inner *= qs[i];
  // The normal equations decouple across the rows of v[mmode]: each response
  // cell touches exactly one row, so we accumulate one R x R system per row.
  std::vector<Eigen::MatrixXd> lhs(Qm, Eigen::MatrixXd::Zero(R, R));
  std::vector<Eigen::VectorXd> rhs(Qm, Eigen::VectorXd::Zero(R));
  for (std::size_t n = 0; n < x.size(); ++n) {
    const Eigen::MatrixXd dmat = build_d_mat(x[n], m, mmode);
    const std::size_t cells = y[n].size();
    for (std::size_t q = 0; q < cells; ++q) {
      const double wq = w[n].values()[q];
      if (wq == 0.0) continue;
      const std::int64_t pre = static_cast<std::int64_t>(q) % inner;
      const std::int64_t rem = static_cast<std::int64_t>(q) / inner;
      const int j = static_cast<int>(rem % Qm);
      const std::int64_t rest = pre + inner * (rem / Qm);
      const double resid = y[n].values()[q] - m.b0.values()[q];
      lhs[j].noalias() += wq * (dmat.row(rest).transpose() * dmat.row(rest));
      rhs[j].noalias() += (wq * resid) * dmat.row(rest).transpose();
    }
  }
  const Eigen::MatrixXd t = gram_except_v(m, mmode);
  for (int j = 0; j < Qm; ++j) {
    lhs[j] += penalty * t;
    m.v[mmode].row(j) = pinv_solve(lhs[j], rhs[j], rel_tol).transpose();
  }
}

int update_b0(const std::vector<Tensor>& x, const std::vector<Tensor>& y,
              const std::vector<Tensor>& w, CpModel& m) {
  const std::size_t cells = m.b0.size();
  std::vector<double> num(cells, 0.0), den(cells, 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const Tensor fit = cp_apply(m, x[n]);
    for (std::size_t q = 0; q < cells; ++q) {
      const double wq = w[n].values()[q];
      if (wq == 0.0) continue;
      num[q] += wq * (y[n].values()[q] - fit.values()[q]);
      den[q] += wq;
    }
  }
  int frozen = 0;
  for (std::size_t q = 0; q < cells; ++q) {
    if (den[q] > 0.0)
      m.b0.values()[q] = num[q] / den[q];
    else
      ++frozen;
  }
  return frozen;
}

void balance_factors(CpModel& m) {
  const int R = m.rank();
  std::vector<Eigen::MatrixXd*> factors;
  for (auto& f : m.u) factors.push_back(&f);
  for (auto& f : m.v) factors.push_back(&f);
  for (int r = 0; r < R; ++r) {
    double logsum = 0.0;
    bool degenerate = false;
    for (const auto* f : factors) {
      const double nrm = f->col(r).norm();
      if (nrm < 1e-300) {
        degenerate = true;
        break;
      }
      logsum += std::log(nrm);
    }
    if (degenerate) continue;
    const double target = std::exp(logsum / static_cast<double>(factors.size()));
    for (auto* f : factors) f->col(r) *= target / f->col(r).norm();
  }
}

double weighted_objective(const std::vector<Tensor>& x,
                          const std::vector<Tensor>& y,
                          const std::vector<Tensor>& w, const CpModel& m,
                          double penalty_norm) {
  double total = penalty_norm * cp_slope_norm_sq(m);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const Tensor fit = cp_apply(m, x[n]);
    for (std::size_t q = 0; q < y[n].size(); ++q) {
      const double wq = w[n].values()[q];
      if (wq == 0.0) continue;
      const double r = y[n].values()[q] - m.b0.values()[q] - fit.values()[q];
      total += wq * r * r;
    }
  }
  return total;
}

}  // namespace rotot
